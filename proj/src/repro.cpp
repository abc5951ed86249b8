#include "wrpn/repro.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "wrpn/analyzer.hpp"
#include "wrpn/bench.hpp"
#include "wrpn/error.hpp"

#ifndef WRPN_DEFAULT_DATA_DIR
#define WRPN_DEFAULT_DATA_DIR "data"
#endif

namespace wrpn {

using nlohmann::json;

bool ReproReport::all_pass() const { return failures() == 0 && !cells.empty(); }

std::size_t ReproReport::failures() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += c.pass ? 0 : 1;
  return n;
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("WRPN_DATA_DIR"); env && *env) return env;
  return WRPN_DEFAULT_DATA_DIR;
}

namespace {

double round_to(double x, int decimals) {
  const double f = std::pow(10.0, decimals);
  return std::round(x * f) / f;
}

// Tolerances are compared on decimal values; 1e-9 absorbs the binary
// representation of e.g. 2.45 - 2.4.
void finish(ReproCell& c, int decimals) {
  c.rounded = round_to(c.computed, decimals);
  c.delta = c.rounded - c.reference;
  c.pass = std::fabs(c.delta) <= c.tolerance + 1e-9;
}

CostModel parse_model(const std::string& s) {
  if (s == "uniform") return CostModel::uniform;
  if (s == "exempt-first-last" || s == "exempt_first_last") return CostModel::exempt_first_last;
  fail(ErrorCode::parse, "unknown cost model '" + s + "'");
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, path.string() + ": " + e.what());
  }
}

}  // namespace

ReproReport run_repro(const std::filesystem::path& data_dir) {
  const json ref = load_json(data_dir / "reference_values.json");
  require(ref.value("format", std::string{}) == "wrpn-reference/1", ErrorCode::parse,
          "reference_values.json: unexpected format");

  std::map<std::string, NetworkDescriptor> nets;
  auto net = [&](const std::string& name) -> const NetworkDescriptor& {
    auto it = nets.find(name);
    if (it == nets.end()) it = nets.emplace(name, load_descriptor(data_dir / "descriptors" / (name + ".json"))).first;
    return it->second;
  };

  ReproReport report;
  try {
    for (const auto& t : ref.at("tables")) {
      const auto id = t.at("id").get<std::string>();
      const auto name = t.at("network").get<std::string>();
      const auto model = parse_model(t.at("model").get<std::string>());
      const int decimals = t.at("decimals").get<int>();
      const double tol = t.at("tolerance").get<double>();
      for (const auto& c : t.at("cells")) {
        ReproCell cell;
        cell.table = id;
        cell.network = name;
        cell.widen = c.at("widen").get<double>();
        cell.bits_a = c.at("bits_a").get<int>();
        cell.bits_w = c.at("bits_w").get<int>();
        cell.reference = c.at("value").get<double>();
        cell.tolerance = tol;
        cell.computed = cost_ratio(net(name), cell.widen, {cell.bits_a, cell.bits_w}, model);
        finish(cell, decimals);
        report.cells.push_back(cell);
      }
    }

    const auto& og = ref.at("ops_growth");
    ReproCell ops;
    ops.table = "ops_growth";
    ops.network = og.at("network").get<std::string>();
    ops.widen = og.at("widen").get<double>();
    ops.reference = og.at("value").get<double>();
    ops.tolerance = og.at("tolerance").get<double>();
    const auto& base = net(ops.network);
    ops.computed = static_cast<double>(total_fma(widen_descriptor(base, ops.widen))) /
                   static_cast<double>(total_fma(base));
    finish(ops, 2);
    report.cells.push_back(ops);

    for (const auto& c : ref.at("first_order").at("cells")) {
      ReproCell cell;
      cell.table = "first_order";
      cell.bits_a = c.at("bits_a").get<int>();
      cell.bits_w = c.at("bits_w").get<int>();
      cell.reference = c.at("value").get<double>();
      cell.computed = first_order_efficiency(cell.bits_a, cell.bits_w);
      finish(cell, 6);
      report.cells.push_back(cell);
    }

    // Byte arithmetic on a 4096-deep operand.
    constexpr std::uint64_t depth = 4096;
    for (const auto& c : ref.at("storage").at("cells")) {
      ReproCell cell;
      cell.table = "storage";
      const auto mode = parse_bench_mode(c.at("mode").get<std::string>());
      cell.network = to_string(mode);
      cell.bits_a = bench_bits_a(mode);
      cell.bits_w = bench_bits_w(mode);
      cell.reference = c.at("value").get<double>();
      cell.computed = static_cast<double>(packed_operand_bytes(BenchMode::fp32, depth)) /
                      static_cast<double>(packed_operand_bytes(mode, depth));
      finish(cell, 6);
      report.cells.push_back(cell);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("reference_values.json: ") + e.what());
  }
  return report;
}

std::string repro_csv(const ReproReport& report) {
  std::string out = "table,network,widen,bits_a,bits_w,reference,computed,rounded,delta,tolerance,pass\n";
  char buf[320];
  for (const auto& c : report.cells) {
    std::snprintf(buf, sizeof buf, "%s,%s,%g,%d,%d,%g,%.6f,%g,%+.4f,%g,%s\n", c.table.c_str(), c.network.c_str(),
                  c.widen, c.bits_a, c.bits_w, c.reference, c.computed, c.rounded, c.delta, c.tolerance,
                  c.pass ? "yes" : "no");
    out += buf;
  }
  return out;
}

std::string repro_summary(const ReproReport& report) {
  std::ostringstream os;
  std::string current;
  char buf[256];
  for (const auto& c : report.cells) {
    if (c.table != current) {
      current = c.table;
      os << "[" << current << "]\n";
    }
    std::snprintf(buf, sizeof buf, "  %-14s %4gx  %-14s ref %-6g got %-9.4f delta %+.3f  %s\n", c.network.c_str(),
                  c.widen, precision_label({c.bits_a, c.bits_w}).c_str(), c.reference, c.computed, c.delta,
                  c.pass ? "ok" : "FAIL");
    os << buf;
  }
  os << report.cells.size() - report.failures() << "/" << report.cells.size() << " cells within tolerance\n";
  return os.str();
}

}  // namespace wrpn
