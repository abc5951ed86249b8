// wrpn command line. Talks to the library only through wrpn.h.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wrpn/wrpn.h"

namespace {

struct Failure {
  int code;
};

void check(wrpn_status s, const char* what) {
  if (s == WRPN_OK) return;
  std::cerr << "wrpn: " << what << ": " << wrpn_status_string(s);
  if (*wrpn_last_error()) std::cerr << ": " << wrpn_last_error();
  std::cerr << "\n";
  throw Failure{static_cast<int>(s) == 0 ? 1 : static_cast<int>(s)};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Tensor = std::unique_ptr<wrpn_tensor, Deleter<wrpn_tensor, wrpn_tensor_free>>;
using QTensor = std::unique_ptr<wrpn_qtensor, Deleter<wrpn_qtensor, wrpn_qtensor_free>>;
using Descriptor = std::unique_ptr<wrpn_descriptor, Deleter<wrpn_descriptor, wrpn_descriptor_free>>;
using Network = std::unique_ptr<wrpn_network, Deleter<wrpn_network, wrpn_network_free>>;

// Owns a string handed out by the library.
std::string take(char* s) {
  std::string out = s ? s : "";
  wrpn_string_free(s);
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    std::cerr << "wrpn: cannot write " << path << "\n";
    throw Failure{WRPN_ERR_IO};
  }
  f << text;
}

// "-" sends the artifact to stdout and the summary to stderr.
void emit(const std::string& out, const std::string& csv, const std::string& summary) {
  if (out == "-") {
    std::cout << csv;
    std::cerr << summary;
    return;
  }
  write_file(out, csv);
  std::cout << summary << "wrote " << out << "\n";
}

Descriptor load_net(const std::string& path) {
  wrpn_descriptor* d = nullptr;
  check(wrpn_descriptor_load(path.c_str(), &d), "load descriptor");
  return Descriptor(d);
}

wrpn_cost_model model_of(const std::string& m) { return m == "uniform" ? WRPN_COST_UNIFORM : WRPN_COST_EXEMPT_FIRST_LAST; }

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    std::cerr << "wrpn: cannot read " << path << "\n";
    throw Failure{WRPN_ERR_IO};
  }
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string fmt(double v, int decimals = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

// ---- quantize

struct QuantizeArgs {
  std::string in, out, csv, family = "wrpn", kind = "weight";
  int bits = 4;
};

int run_quantize(const QuantizeArgs& a) {
  wrpn_tensor* raw = nullptr;
  check(wrpn_tensor_load(a.in.c_str(), &raw), "load tensor");
  Tensor in(raw);
  const size_t n = wrpn_tensor_size(in.get());
  const float* x = wrpn_tensor_data(in.get());
  const std::string out = a.out.empty() ? a.in + ".q" : a.out;
  std::ostringstream csv, summary;
  csv << "index,input,code,value\n";

  if (a.family == "dorefa") {
    wrpn_tensor* q = nullptr;
    check(wrpn_quantize_dorefa(in.get(), a.bits, &q), "quantize");
    Tensor qt(q);
    check(wrpn_tensor_save(qt.get(), out.c_str()), "save tensor");
    const float* v = wrpn_tensor_data(qt.get());
    for (size_t i = 0; i < n; ++i) csv << i << ',' << fmt(x[i], 8) << ",," << fmt(v[i], 8) << '\n';
    summary << "dorefa k=" << a.bits << ": " << n << " values (plain tensor, no code/scale form)\n";
  } else {
    const wrpn_family fam = a.family == "bwn" ? WRPN_FAMILY_BWN : WRPN_FAMILY_WRPN;
    const wrpn_operand kind = a.kind == "activation" ? WRPN_ACTIVATION : WRPN_WEIGHT;
    wrpn_qtensor* q = nullptr;
    check(wrpn_quantize(in.get(), fam, kind, a.bits, &q), "quantize");
    QTensor qt(q);
    check(wrpn_qtensor_save(qt.get(), out.c_str()), "save quantized tensor");
    const int32_t* codes = nullptr;
    size_t count = 0;
    check(wrpn_qtensor_codes(qt.get(), &codes, &count), "codes");
    const float scale = wrpn_qtensor_scale(qt.get());
    int lo = 0, hi = 0;
    for (size_t i = 0; i < count; ++i) {
      lo = i ? std::min(lo, codes[i]) : codes[i];
      hi = i ? std::max(hi, codes[i]) : codes[i];
      csv << i << ',' << fmt(x[i], 8) << ',' << codes[i] << ',' << fmt(static_cast<float>(codes[i]) * scale, 8) << '\n';
    }
    summary << a.family << ' ' << a.kind << " k=" << a.bits << ": " << count << " values, codes in [" << lo << ", "
            << hi << "], scale " << fmt(scale, 8) << "\n";
  }
  summary << "quantized tensor: " << out << "\n";
  if (!a.csv.empty()) {
    emit(a.csv, csv.str(), summary.str());
  } else {
    std::cout << summary.str();
  }
  return 0;
}

// ---- analyze-cost

struct CostArgs {
  std::string net, grid = "standard", model = "uniform", out = "cost.csv";
  std::vector<double> widen{1.0};
  std::string layers;  // "A:W" for a per-layer report
};

int run_cost(const CostArgs& a) {
  auto d = load_net(a.net);
  std::ostringstream summary;
  std::string csv;
  if (!a.layers.empty()) {
    int ba = 0, bw = 0;
    if (std::sscanf(a.layers.c_str(), "%d:%d", &ba, &bw) != 2) {
      std::cerr << "wrpn: --layers expects A:W\n";
      return WRPN_ERR_INVALID_ARGUMENT;
    }
    char* s = nullptr;
    check(wrpn_cost_report_csv(d.get(), a.widen.front(), ba, bw, model_of(a.model), &s), "cost report");
    csv = take(s);
    double r = 0;
    check(wrpn_cost_ratio(d.get(), a.widen.front(), ba, bw, model_of(a.model), &r), "cost ratio");
    summary << wrpn_descriptor_name(d.get()) << " " << a.widen.front() << "x " << ba << "A/" << bw << "W: cost "
            << fmt(r, 4) << "x of the 1x FP32 network\n";
  } else if (a.widen.size() == 1 && a.grid == "standard") {
    char* s = nullptr;
    check(wrpn_cost_grid_csv(d.get(), a.widen.front(), model_of(a.model), &s), "cost grid");
    csv = take(s);
    summary << wrpn_descriptor_name(d.get()) << " " << a.widen.front() << "x, " << a.model << " model:\n" << csv;
  } else {
    char* s = nullptr;
    check(wrpn_cost_table_csv(d.get(), a.widen.data(), a.widen.size(), a.grid.c_str(), model_of(a.model), &s),
          "cost table");
    csv = take(s);
    summary << wrpn_descriptor_name(d.get()) << ": " << a.widen.size() << " widen factor(s), grid " << a.grid << "\n";
  }
  uint64_t base = 0, wide = 0;
  check(wrpn_descriptor_total_fma(d.get(), 1.0, &base), "fma");
  check(wrpn_descriptor_total_fma(d.get(), a.widen.back(), &wide), "fma");
  summary << "FMA: " << base << " at 1x, " << wide << " at " << a.widen.back() << "x (" << fmt(double(wide) / base, 4)
          << "x)\n";
  emit(a.out, csv, summary.str());
  return 0;
}

// ---- analyze-memory

struct MemoryArgs {
  std::string net, phase = "training", out = "memory.csv";
  std::vector<size_t> batches{1, 32, 128, 256};
  double act_bytes = 4, weight_bytes = 4;
};

int run_memory(const MemoryArgs& a) {
  auto d = load_net(a.net);
  const wrpn_phase ph = a.phase == "inference" ? WRPN_INFERENCE : WRPN_TRAINING;
  char* s = nullptr;
  check(wrpn_memory_csv(d.get(), a.batches.data(), a.batches.size(), ph, a.act_bytes, a.weight_bytes, &s), "memory");
  std::ostringstream summary;
  summary << wrpn_descriptor_name(d.get()) << " " << a.phase << " activation fraction:";
  for (size_t b : a.batches) {
    double f = 0;
    check(wrpn_memory_fraction(d.get(), b, ph, &f), "memory fraction");
    summary << " b" << b << "=" << fmt(f, 4);
  }
  summary << "\n";
  emit(a.out, take(s), summary.str());
  return 0;
}

// ---- train

struct TrainArgs {
  std::string net, config, data = "patterns", eval, out = "train.csv";
  double widen = 1.0;
  int bits_a = 32, bits_w = 32;
  bool uniform = false, packed_eval = false;
  uint64_t seed = 1;
};

int run_train(const TrainArgs& a) {
  auto d = load_net(a.net);
  wrpn_network* raw = nullptr;
  check(wrpn_network_build(d.get(), a.widen, a.bits_a, a.bits_w, a.uniform ? 0 : 1, a.seed, &raw), "build network");
  Network net(raw);
  const std::string cfg = a.config.empty() ? std::string() : read_text(a.config);
  char* s = nullptr;
  check(wrpn_network_train(net.get(), a.data.c_str(), a.eval.empty() ? nullptr : a.eval.c_str(),
                           a.config.empty() ? nullptr : cfg.c_str(), &s),
        "train");
  const std::string csv = take(s);
  std::ostringstream summary;
  summary << wrpn_descriptor_name(d.get()) << " " << a.widen << "x " << a.bits_a << "A/" << a.bits_w << "W, "
          << wrpn_network_parameter_count(net.get()) << " parameters\n";
  // last log line carries the final epoch
  const auto last = csv.find_last_of('\n', csv.size() - 2);
  if (last != std::string::npos) summary << "final epoch,lr,loss,train_top1,top1: " << csv.substr(last + 1);
  if (!a.eval.empty()) {
    double ref = 0, packed = 0;
    check(wrpn_network_evaluate(net.get(), a.eval.c_str(), 0, &ref), "evaluate");
    summary << "eval top-1 " << fmt(ref, 2);
    if (a.packed_eval) {
      check(wrpn_network_evaluate(net.get(), a.eval.c_str(), 1, &packed), "evaluate packed");
      summary << " (packed kernels " << fmt(packed, 2) << ")";
    }
    summary << "\n";
  }
  emit(a.out, csv, summary.str());
  return 0;
}

// ---- bench

struct BenchArgs {
  size_t m = 64, n = 64, k = 256;
  std::string modes, out = "bench.csv";
  int reps = 5;
  uint64_t seed = 1;
};

int run_bench(const BenchArgs& a) {
  char* s = nullptr;
  check(wrpn_bench_csv(a.m, a.n, a.k, a.modes.empty() ? nullptr : a.modes.c_str(), a.reps, a.seed, &s), "bench");
  const std::string csv = take(s);
  std::ostringstream summary;
  summary << "GEMM " << a.m << "x" << a.n << "x" << a.k << ", best of " << a.reps << ":\n" << csv;
  emit(a.out, csv, summary.str());
  return 0;
}

// ---- repro-tables

struct ReproArgs {
  std::string data_dir, out = "repro.csv";
};

int run_repro(const ReproArgs& a) {
  char* csv = nullptr;
  char* summary = nullptr;
  int pass = 0;
  check(wrpn_repro(a.data_dir.empty() ? nullptr : a.data_dir.c_str(), &csv, &summary, &pass), "repro");
  emit(a.out, take(csv), take(summary));
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wrpn: wide reduced-precision network tools"};
  app.require_subcommand(1);
  int threads = -1;
  app.add_option("--threads", threads, "kernel threads (0 = hardware; default $WRPN_NUM_THREADS)");
  app.set_version_flag("--version", std::string(wrpn_version()));

  QuantizeArgs qa;
  auto* q = app.add_subcommand("quantize", "quantize a tensor file");
  q->add_option("--in", qa.in, "input tensor")->required();
  q->add_option("--out", qa.out, "output file (default <in>.q)");
  q->add_option("--csv", qa.csv, "per-element CSV (- for stdout)");
  q->add_option("--family", qa.family)->check(CLI::IsMember({"wrpn", "dorefa", "bwn"}));
  q->add_option("--kind", qa.kind)->check(CLI::IsMember({"weight", "activation"}));
  q->add_option("--bits", qa.bits)->check(CLI::Range(1, 16));

  CostArgs ca;
  auto* c = app.add_subcommand("analyze-cost", "compute-cost tables");
  c->add_option("--net", ca.net, "descriptor JSON")->required();
  c->add_option("--widen", ca.widen, "widen factor(s)")->delimiter(',');
  c->add_option("--grid", ca.grid, "standard or A:W,A:W,...");
  c->add_option("--model", ca.model)->check(CLI::IsMember({"uniform", "exempt"}));
  c->add_option("--layers", ca.layers, "per-layer report for one A:W precision");
  c->add_option("--out", ca.out, "CSV artifact (- for stdout)");

  MemoryArgs ma;
  auto* m = app.add_subcommand("analyze-memory", "memory footprint across batch sizes");
  m->add_option("--net", ma.net, "descriptor JSON")->required();
  m->add_option("--batch", ma.batches, "batch sizes")->delimiter(',');
  m->add_option("--phase", ma.phase)->check(CLI::IsMember({"training", "inference"}));
  m->add_option("--act-bytes", ma.act_bytes);
  m->add_option("--weight-bytes", ma.weight_bytes);
  m->add_option("--out", ma.out, "CSV artifact (- for stdout)");

  TrainArgs ta;
  auto* t = app.add_subcommand("train", "train a desk-scale network");
  t->add_option("--net", ta.net, "descriptor JSON")->required();
  t->add_option("--config", ta.config, "TrainConfig JSON");
  t->add_option("--data", ta.data, "patterns[:N], blobs[:N] or images.idx,labels.idx");
  t->add_option("--eval", ta.eval, "evaluation dataset");
  t->add_option("--widen", ta.widen);
  t->add_option("--bits-a", ta.bits_a);
  t->add_option("--bits-w", ta.bits_w);
  t->add_flag("--uniform", ta.uniform, "quantize first and last layers too");
  t->add_flag("--packed-eval", ta.packed_eval, "also evaluate through the packed kernels");
  t->add_option("--seed", ta.seed, "weight init seed");
  t->add_option("--out", ta.out, "log CSV (- for stdout)");

  BenchArgs ba;
  auto* b = app.add_subcommand("bench", "packed GEMM throughput");
  b->add_option("-m,--m", ba.m);
  b->add_option("-n,--n", ba.n);
  b->add_option("-k,--k", ba.k);
  b->add_option("--modes", ba.modes, "fp32,i4i4,i4ter,binary,xnor");
  b->add_option("--reps", ba.reps)->check(CLI::PositiveNumber);
  b->add_option("--seed", ba.seed);
  b->add_option("--out", ba.out, "CSV artifact (- for stdout)");

  ReproArgs ra;
  auto* r = app.add_subcommand("repro-tables", "compare computed costs with the reference tables");
  r->add_option("--data-dir", ra.data_dir, "directory holding reference_values.json and descriptors/");
  r->add_option("--out", ra.out, "CSV artifact (- for stdout)");

  CLI11_PARSE(app, argc, argv);
  if (threads >= 0) wrpn_set_threads(threads);

  try {
    if (*q) return run_quantize(qa);
    if (*c) return run_cost(ca);
    if (*m) return run_memory(ma);
    if (*t) return run_train(ta);
    if (*b) return run_bench(ba);
    if (*r) return run_repro(ra);
  } catch (const Failure& f) {
    return f.code;
  }
  return 1;
}
