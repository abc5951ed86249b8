/* C interface to the wrpn library.
 *
 * Every function returns a wrpn_status; on failure a message for the calling
 * thread is available from wrpn_last_error(). Objects are opaque handles
 * released with their *_free function. Strings returned through char** are
 * heap copies released with wrpn_string_free.
 */
#ifndef WRPN_WRPN_H
#define WRPN_WRPN_H

#include <stddef.h>
#include <stdint.h>

#if defined(WRPN_BUILDING_LIBRARY)
#define WRPN_API __attribute__((visibility("default")))
#else
#define WRPN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wrpn_status {
  WRPN_OK = 0,
  WRPN_ERR_INVALID_ARGUMENT = 1,
  WRPN_ERR_SHAPE_MISMATCH = 2,
  WRPN_ERR_DOMAIN = 3,
  WRPN_ERR_IO = 4,
  WRPN_ERR_PARSE = 5,
  WRPN_ERR_NUMERIC = 6,
  WRPN_ERR_STATE = 7,
  WRPN_ERR_INTERNAL = 99
} wrpn_status;

typedef enum wrpn_family { WRPN_FAMILY_WRPN = 0, WRPN_FAMILY_DOREFA = 1, WRPN_FAMILY_BWN = 2 } wrpn_family;
typedef enum wrpn_operand { WRPN_WEIGHT = 0, WRPN_ACTIVATION = 1 } wrpn_operand;
typedef enum wrpn_cost_model { WRPN_COST_UNIFORM = 0, WRPN_COST_EXEMPT_FIRST_LAST = 1 } wrpn_cost_model;
typedef enum wrpn_phase { WRPN_TRAINING = 0, WRPN_INFERENCE = 1 } wrpn_phase;

typedef struct wrpn_tensor wrpn_tensor;
typedef struct wrpn_qtensor wrpn_qtensor;
typedef struct wrpn_descriptor wrpn_descriptor;
typedef struct wrpn_network wrpn_network;

WRPN_API const char* wrpn_version(void);
WRPN_API const char* wrpn_status_string(wrpn_status status);
/* Message of the last failing call on this thread; "" if none. */
WRPN_API const char* wrpn_last_error(void);
WRPN_API void wrpn_string_free(char* s);

/* ---- tensors ---- */
WRPN_API wrpn_status wrpn_tensor_create(const size_t* shape, size_t rank, const float* data, wrpn_tensor** out);
WRPN_API wrpn_status wrpn_tensor_load(const char* path, wrpn_tensor** out);
WRPN_API wrpn_status wrpn_tensor_save(const wrpn_tensor* t, const char* path);
WRPN_API size_t wrpn_tensor_rank(const wrpn_tensor* t);
WRPN_API size_t wrpn_tensor_size(const wrpn_tensor* t);
WRPN_API wrpn_status wrpn_tensor_shape(const wrpn_tensor* t, size_t* shape, size_t capacity);
WRPN_API const float* wrpn_tensor_data(const wrpn_tensor* t);
WRPN_API void wrpn_tensor_free(wrpn_tensor* t);

/* ---- quantization ----
 * wrpn: clip then quantize (weights need bits >= 2); bwn: one-bit weights;
 * dorefa has an affine grid and is only available through
 * wrpn_quantize_dorefa, which returns real values. */
WRPN_API wrpn_status wrpn_quantize(const wrpn_tensor* in, wrpn_family family, wrpn_operand kind, int bits,
                                   wrpn_qtensor** out);
WRPN_API wrpn_status wrpn_quantize_dorefa(const wrpn_tensor* in, int bits, wrpn_tensor** out);
WRPN_API wrpn_status wrpn_qtensor_load(const char* path, wrpn_qtensor** out);
WRPN_API wrpn_status wrpn_qtensor_save(const wrpn_qtensor* q, const char* path);
WRPN_API wrpn_status wrpn_qtensor_dequantize(const wrpn_qtensor* q, wrpn_tensor** out);
WRPN_API wrpn_status wrpn_qtensor_codes(const wrpn_qtensor* q, const int32_t** codes, size_t* count);
WRPN_API float wrpn_qtensor_scale(const wrpn_qtensor* q);
WRPN_API int wrpn_qtensor_bits(const wrpn_qtensor* q);
WRPN_API void wrpn_qtensor_free(wrpn_qtensor* q);

/* ---- network descriptors and static analysis ---- */
WRPN_API wrpn_status wrpn_descriptor_load(const char* path, wrpn_descriptor** out);
WRPN_API wrpn_status wrpn_descriptor_parse(const char* json, wrpn_descriptor** out);
WRPN_API const char* wrpn_descriptor_name(const wrpn_descriptor* d);
WRPN_API wrpn_status wrpn_descriptor_total_fma(const wrpn_descriptor* d, double widen, uint64_t* out);
WRPN_API void wrpn_descriptor_free(wrpn_descriptor* d);

WRPN_API wrpn_status wrpn_cost_ratio(const wrpn_descriptor* d, double widen, int bits_a, int bits_w,
                                     wrpn_cost_model model, double* out);
/* Long format over widen factors × precision grid ("standard" or "A:W,..."). */
WRPN_API wrpn_status wrpn_cost_table_csv(const wrpn_descriptor* d, const double* widen, size_t n_widen,
                                         const char* grid, wrpn_cost_model model, char** csv);
/* Weights × activations square for one widen factor. */
WRPN_API wrpn_status wrpn_cost_grid_csv(const wrpn_descriptor* d, double widen, wrpn_cost_model model, char** csv);
/* Per-layer costs of one configuration against the unwidened FP32 network. */
WRPN_API wrpn_status wrpn_cost_report_csv(const wrpn_descriptor* d, double widen, int bits_a, int bits_w,
                                          wrpn_cost_model model, char** csv);
WRPN_API wrpn_status wrpn_memory_csv(const wrpn_descriptor* d, const size_t* batches, size_t n_batches,
                                     wrpn_phase phase, double bytes_per_act, double bytes_per_weight, char** csv);
WRPN_API wrpn_status wrpn_memory_fraction(const wrpn_descriptor* d, size_t batch, wrpn_phase phase,
                                          double* fraction);
WRPN_API wrpn_status wrpn_first_order_efficiency(int bits_a, int bits_w, double* out);

/* ---- kernels ---- */
/* modes: comma list of fp32,i4i4,i4ter,binary,xnor (NULL = all). */
WRPN_API wrpn_status wrpn_bench_csv(size_t m, size_t n, size_t k, const char* modes, int reps, uint64_t seed,
                                    char** csv);
WRPN_API wrpn_status wrpn_packed_operand_bytes(const char* mode, uint64_t depth, uint64_t* bytes);
WRPN_API void wrpn_set_threads(int n);

/* ---- reference tables ---- */
/* data_dir NULL = built-in data directory (or $WRPN_DATA_DIR). */
WRPN_API wrpn_status wrpn_repro(const char* data_dir, char** csv, char** summary, int* all_pass);

/* ---- training ---- */
/* Precision applies to hidden conv/fc layers; with exempt_first_last the
 * first and last trainable layers stay FP32. */
WRPN_API wrpn_status wrpn_network_build(const wrpn_descriptor* d, double widen, int bits_a, int bits_w,
                                        int exempt_first_last, uint64_t seed, wrpn_network** out);
WRPN_API size_t wrpn_network_parameter_count(const wrpn_network* net);
/* Dataset specs: "blobs[:N]", "patterns[:N]" or "<images.idx>,<labels.idx>".
 * eval may be NULL. config_json may be NULL for defaults. */
WRPN_API wrpn_status wrpn_network_train(wrpn_network* net, const char* train_data, const char* eval_data,
                                        const char* config_json, char** log_csv);
/* packed != 0 routes quantized layers through the bit-packed kernels. */
WRPN_API wrpn_status wrpn_network_evaluate(const wrpn_network* net, const char* data, int packed, double* top1);
WRPN_API void wrpn_network_free(wrpn_network* net);

#ifdef __cplusplus
}
#endif

#endif
