#include "wrpn/wrpn.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "wrpn/analyzer.hpp"
#include "wrpn/bench.hpp"
#include "wrpn/dataset.hpp"
#include "wrpn/descriptor.hpp"
#include "wrpn/kernels.hpp"
#include "wrpn/network.hpp"
#include "wrpn/quant.hpp"
#include "wrpn/repro.hpp"
#include "wrpn/serialize.hpp"
#include "wrpn/train.hpp"

struct wrpn_tensor {
  wrpn::Tensor t;
};
struct wrpn_qtensor {
  wrpn::QuantizedTensor q;
};
struct wrpn_descriptor {
  wrpn::NetworkDescriptor d;
};
struct wrpn_network {
  wrpn::Network<float> net;
};

namespace {

thread_local std::string g_last_error;

wrpn_status to_status(wrpn::ErrorCode code) {
  switch (code) {
    case wrpn::ErrorCode::invalid_argument: return WRPN_ERR_INVALID_ARGUMENT;
    case wrpn::ErrorCode::shape_mismatch: return WRPN_ERR_SHAPE_MISMATCH;
    case wrpn::ErrorCode::domain: return WRPN_ERR_DOMAIN;
    case wrpn::ErrorCode::io: return WRPN_ERR_IO;
    case wrpn::ErrorCode::parse: return WRPN_ERR_PARSE;
    case wrpn::ErrorCode::numeric: return WRPN_ERR_NUMERIC;
    case wrpn::ErrorCode::state: return WRPN_ERR_STATE;
  }
  return WRPN_ERR_INTERNAL;
}

template <typename Fn>
wrpn_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return WRPN_OK;
  } catch (const wrpn::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return WRPN_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return WRPN_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) wrpn::fail(wrpn::ErrorCode::invalid_argument, std::string(what) + " is NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

wrpn::CostModel model_of(wrpn_cost_model m) {
  switch (m) {
    case WRPN_COST_UNIFORM: return wrpn::CostModel::uniform;
    case WRPN_COST_EXEMPT_FIRST_LAST: return wrpn::CostModel::exempt_first_last;
  }
  wrpn::fail(wrpn::ErrorCode::invalid_argument, "unknown cost model");
}

wrpn::Phase phase_of(wrpn_phase p) {
  switch (p) {
    case WRPN_TRAINING: return wrpn::Phase::training;
    case WRPN_INFERENCE: return wrpn::Phase::inference;
  }
  wrpn::fail(wrpn::ErrorCode::invalid_argument, "unknown phase");
}

std::vector<wrpn::BenchMode> parse_modes(const char* modes) {
  if (!modes || !*modes) return wrpn::all_bench_modes();
  std::vector<wrpn::BenchMode> out;
  std::stringstream ss(modes);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(wrpn::parse_bench_mode(item));
  return out;
}

}  // namespace

extern "C" {

const char* wrpn_version(void) { return "0.1.0"; }

const char* wrpn_status_string(wrpn_status status) {
  switch (status) {
    case WRPN_OK: return "ok";
    case WRPN_ERR_INVALID_ARGUMENT: return "invalid argument";
    case WRPN_ERR_SHAPE_MISMATCH: return "shape mismatch";
    case WRPN_ERR_DOMAIN: return "domain error";
    case WRPN_ERR_IO: return "i/o error";
    case WRPN_ERR_PARSE: return "parse error";
    case WRPN_ERR_NUMERIC: return "numeric error";
    case WRPN_ERR_STATE: return "invalid state";
    case WRPN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* wrpn_last_error(void) { return g_last_error.c_str(); }

void wrpn_string_free(char* s) { std::free(s); }

// ---- tensors

wrpn_status wrpn_tensor_create(const size_t* shape, size_t rank, const float* data, wrpn_tensor** out) {
  return guarded([&] {
    need(out, "out");
    need(shape, "shape");
    wrpn::Shape s(shape, shape + rank);
    auto t = std::make_unique<wrpn_tensor>();
    t->t = wrpn::Tensor(s);
    if (data) std::memcpy(t->t.data(), data, t->t.size() * sizeof(float));
    *out = t.release();
  });
}

wrpn_status wrpn_tensor_load(const char* path, wrpn_tensor** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new wrpn_tensor{wrpn::load_tensor(path)};
  });
}

wrpn_status wrpn_tensor_save(const wrpn_tensor* t, const char* path) {
  return guarded([&] {
    need(t, "tensor");
    need(path, "path");
    wrpn::save_tensor(path, t->t);
  });
}

size_t wrpn_tensor_rank(const wrpn_tensor* t) { return t ? t->t.rank() : 0; }
size_t wrpn_tensor_size(const wrpn_tensor* t) { return t ? t->t.size() : 0; }

wrpn_status wrpn_tensor_shape(const wrpn_tensor* t, size_t* shape, size_t capacity) {
  return guarded([&] {
    need(t, "tensor");
    need(shape, "shape");
    wrpn::require(capacity >= t->t.rank(), wrpn::ErrorCode::invalid_argument, "shape buffer too small");
    for (size_t i = 0; i < t->t.rank(); ++i) shape[i] = t->t.extent(i);
  });
}

const float* wrpn_tensor_data(const wrpn_tensor* t) { return t ? t->t.data() : nullptr; }
void wrpn_tensor_free(wrpn_tensor* t) { delete t; }

// ---- quantization

wrpn_status wrpn_quantize(const wrpn_tensor* in, wrpn_family family, wrpn_operand kind, int bits, wrpn_qtensor** out) {
  return guarded([&] {
    need(in, "tensor");
    need(out, "out");
    wrpn::QuantizedTensor q;
    switch (family) {
      case WRPN_FAMILY_WRPN:
        q = kind == WRPN_WEIGHT ? wrpn::quantize_weights_wrpn(wrpn::clip_weights(in->t), bits)
                                : wrpn::quantize_acts_wrpn(wrpn::clip_acts(in->t), bits);
        break;
      case WRPN_FAMILY_BWN:
        wrpn::require(kind == WRPN_WEIGHT && bits == 1, wrpn::ErrorCode::invalid_argument,
                      "bwn binarization is for one-bit weights");
        q = wrpn::binarize_weights_bwn(in->t);
        break;
      case WRPN_FAMILY_DOREFA:
        wrpn::fail(wrpn::ErrorCode::invalid_argument, "dorefa has no code/scale form; use wrpn_quantize_dorefa");
      default:
        wrpn::fail(wrpn::ErrorCode::invalid_argument, "unknown quantizer family");
    }
    *out = new wrpn_qtensor{std::move(q)};
  });
}

wrpn_status wrpn_quantize_dorefa(const wrpn_tensor* in, int bits, wrpn_tensor** out) {
  return guarded([&] {
    need(in, "tensor");
    need(out, "out");
    *out = new wrpn_tensor{wrpn::quantize_weights_dorefa(in->t, bits)};
  });
}

wrpn_status wrpn_qtensor_load(const char* path, wrpn_qtensor** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new wrpn_qtensor{wrpn::load_quantized(path)};
  });
}

wrpn_status wrpn_qtensor_save(const wrpn_qtensor* q, const char* path) {
  return guarded([&] {
    need(q, "qtensor");
    need(path, "path");
    wrpn::save_quantized(path, q->q);
  });
}

wrpn_status wrpn_qtensor_dequantize(const wrpn_qtensor* q, wrpn_tensor** out) {
  return guarded([&] {
    need(q, "qtensor");
    need(out, "out");
    *out = new wrpn_tensor{q->q.dequantize()};
  });
}

wrpn_status wrpn_qtensor_codes(const wrpn_qtensor* q, const int32_t** codes, size_t* count) {
  return guarded([&] {
    need(q, "qtensor");
    need(codes, "codes");
    need(count, "count");
    *codes = q->q.codes.data();
    *count = q->q.codes.size();
  });
}

float wrpn_qtensor_scale(const wrpn_qtensor* q) { return q ? q->q.scale : 0.0f; }
int wrpn_qtensor_bits(const wrpn_qtensor* q) { return q ? q->q.spec.bits : 0; }
void wrpn_qtensor_free(wrpn_qtensor* q) { delete q; }

// ---- descriptors and analysis

wrpn_status wrpn_descriptor_load(const char* path, wrpn_descriptor** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new wrpn_descriptor{wrpn::load_descriptor(path)};
  });
}

wrpn_status wrpn_descriptor_parse(const char* json, wrpn_descriptor** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    *out = new wrpn_descriptor{wrpn::parse_descriptor(json)};
  });
}

const char* wrpn_descriptor_name(const wrpn_descriptor* d) { return d ? d->d.name.c_str() : ""; }

wrpn_status wrpn_descriptor_total_fma(const wrpn_descriptor* d, double widen, uint64_t* out) {
  return guarded([&] {
    need(d, "descriptor");
    need(out, "out");
    *out = wrpn::total_fma(wrpn::widen_descriptor(d->d, widen));
  });
}

void wrpn_descriptor_free(wrpn_descriptor* d) { delete d; }

wrpn_status wrpn_cost_ratio(const wrpn_descriptor* d, double widen, int bits_a, int bits_w, wrpn_cost_model model,
                            double* out) {
  return guarded([&] {
    need(d, "descriptor");
    need(out, "out");
    *out = wrpn::cost_ratio(d->d, widen, {bits_a, bits_w}, model_of(model));
  });
}

wrpn_status wrpn_cost_table_csv(const wrpn_descriptor* d, const double* widen, size_t n_widen, const char* grid,
                                wrpn_cost_model model, char** csv) {
  return guarded([&] {
    need(d, "descriptor");
    need(widen, "widen");
    need(csv, "csv");
    const auto table = wrpn::cost_table(d->d, std::vector<double>(widen, widen + n_widen),
                                        wrpn::parse_precision_grid(grid ? grid : "standard"), model_of(model));
    *csv = dup_string(wrpn::cost_table_csv(table));
  });
}

wrpn_status wrpn_cost_grid_csv(const wrpn_descriptor* d, double widen, wrpn_cost_model model, char** csv) {
  return guarded([&] {
    need(d, "descriptor");
    need(csv, "csv");
    const auto table = wrpn::cost_table(d->d, {widen}, wrpn::standard_precision_grid(), model_of(model));
    *csv = dup_string(wrpn::cost_grid_csv(table, 0));
  });
}

wrpn_status wrpn_cost_report_csv(const wrpn_descriptor* d, double widen, int bits_a, int bits_w, wrpn_cost_model model,
                                 char** csv) {
  return guarded([&] {
    need(d, "descriptor");
    need(csv, "csv");
    const auto base = wrpn::compute_cost(d->d, wrpn::PrecisionPolicy::uniform({}));
    const auto wide = wrpn::widen_descriptor(d->d, widen);
    const auto report = wrpn::compute_cost(wide, wrpn::policy_for(model_of(model), wide, {bits_a, bits_w}));
    *csv = dup_string(wrpn::cost_report_csv(report, base));
  });
}

wrpn_status wrpn_memory_csv(const wrpn_descriptor* d, const size_t* batches, size_t n_batches, wrpn_phase phase,
                            double bytes_per_act, double bytes_per_weight, char** csv) {
  return guarded([&] {
    need(d, "descriptor");
    need(batches, "batches");
    need(csv, "csv");
    wrpn::FootprintOptions opt;
    opt.bytes_per_act = bytes_per_act;
    opt.bytes_per_weight = bytes_per_weight;
    std::vector<wrpn::FootprintReport> reports;
    for (size_t i = 0; i < n_batches; ++i) reports.push_back(wrpn::memory_footprint(d->d, batches[i], phase_of(phase), opt));
    *csv = dup_string(wrpn::footprint_csv(reports));
  });
}

wrpn_status wrpn_memory_fraction(const wrpn_descriptor* d, size_t batch, wrpn_phase phase, double* fraction) {
  return guarded([&] {
    need(d, "descriptor");
    need(fraction, "fraction");
    *fraction = wrpn::memory_footprint(d->d, batch, phase_of(phase)).activation_fraction;
  });
}

wrpn_status wrpn_first_order_efficiency(int bits_a, int bits_w, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = wrpn::first_order_efficiency(bits_a, bits_w);
  });
}

// ---- kernels

wrpn_status wrpn_bench_csv(size_t m, size_t n, size_t k, const char* modes, int reps, uint64_t seed, char** csv) {
  return guarded([&] {
    need(csv, "csv");
    wrpn::BenchConfig cfg;
    cfg.m = m;
    cfg.n = n;
    cfg.k = k;
    cfg.modes = parse_modes(modes);
    cfg.reps = reps;
    cfg.seed = seed;
    *csv = dup_string(wrpn::bench_csv(wrpn::bench_gemm(cfg)));
  });
}

wrpn_status wrpn_packed_operand_bytes(const char* mode, uint64_t depth, uint64_t* bytes) {
  return guarded([&] {
    need(mode, "mode");
    need(bytes, "bytes");
    *bytes = wrpn::packed_operand_bytes(wrpn::parse_bench_mode(mode), depth);
  });
}

void wrpn_set_threads(int n) { wrpn::set_kernel_threads(n); }

// ---- reference tables

wrpn_status wrpn_repro(const char* data_dir, char** csv, char** summary, int* all_pass) {
  return guarded([&] {
    const auto report = wrpn::run_repro(data_dir ? std::filesystem::path(data_dir) : wrpn::default_data_dir());
    if (csv) *csv = dup_string(wrpn::repro_csv(report));
    if (summary) *summary = dup_string(wrpn::repro_summary(report));
    if (all_pass) *all_pass = report.all_pass() ? 1 : 0;
  });
}

// ---- training

wrpn_status wrpn_network_build(const wrpn_descriptor* d, double widen, int bits_a, int bits_w, int exempt_first_last,
                               uint64_t seed, wrpn_network** out) {
  return guarded([&] {
    need(d, "descriptor");
    need(out, "out");
    wrpn::BuildOptions o;
    o.widen = widen;
    o.seed = seed;
    o.policy = exempt_first_last ? wrpn::PrecisionPolicy::standard(d->d, {bits_a, bits_w})
                                 : wrpn::PrecisionPolicy::uniform({bits_a, bits_w});
    *out = new wrpn_network{wrpn::Network<float>::build(d->d, o)};
  });
}

size_t wrpn_network_parameter_count(const wrpn_network* net) { return net ? net->net.scalar_parameter_count() : 0; }

wrpn_status wrpn_network_train(wrpn_network* net, const char* train_data, const char* eval_data,
                               const char* config_json, char** log_csv) {
  return guarded([&] {
    need(net, "network");
    need(train_data, "train_data");
    const auto cfg = config_json ? wrpn::parse_train_config(config_json) : wrpn::TrainConfig{};
    const auto train_set = wrpn::load_dataset(train_data, 1);
    std::unique_ptr<wrpn::Dataset> eval_set;
    if (eval_data) eval_set = std::make_unique<wrpn::Dataset>(wrpn::load_dataset(eval_data, 2));
    const auto log = wrpn::train(net->net, train_set, eval_set.get(), cfg);
    if (log_csv) *log_csv = dup_string(wrpn::train_log_csv(log));
  });
}

wrpn_status wrpn_network_evaluate(const wrpn_network* net, const char* data, int packed, double* top1) {
  return guarded([&] {
    need(net, "network");
    need(data, "data");
    need(top1, "top1");
    *top1 = wrpn::evaluate(net->net, wrpn::load_dataset(data, 2), packed ? wrpn::Exec::packed : wrpn::Exec::reference);
  });
}

void wrpn_network_free(wrpn_network* net) { delete net; }

}  // extern "C"
