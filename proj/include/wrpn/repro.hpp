#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace wrpn {

// One compared quantity. `rounded` is `computed` rounded to the number of
// decimals the reference value was published with.
struct ReproCell {
  std::string table;
  std::string network;
  double widen = 1;
  int bits_a = 32;
  int bits_w = 32;
  double reference = 0;
  double computed = 0;
  double rounded = 0;
  double delta = 0;       // rounded - reference
  double tolerance = 0;
  bool pass = false;
};

struct ReproReport {
  std::vector<ReproCell> cells;
  bool all_pass() const;
  std::size_t failures() const;
};

// Compile-time data directory, overridable with WRPN_DATA_DIR.
std::filesystem::path default_data_dir();

// Reads <data_dir>/reference_values.json and the descriptors it names from
// <data_dir>/descriptors/, then recomputes every cell.
ReproReport run_repro(const std::filesystem::path& data_dir);

// table,network,widen,bits_a,bits_w,reference,computed,rounded,delta,tolerance,pass
std::string repro_csv(const ReproReport& report);
std::string repro_summary(const ReproReport& report);

}  // namespace wrpn
