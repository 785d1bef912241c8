#pragma once

// Text artifacts: coefficient dumps, residual history CSV, key=value
// summaries and per-order series dumps. Reals are printed with %.17g so a
// dump read back reproduces the coefficients bit for bit.

#include <cctype>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fkkam/errors.hpp"
#include "fkkam/kam_solver.hpp"
#include "fkkam/lindstedt.hpp"
#include "fkkam/spectral_field.hpp"

namespace fkkam {

/// %.17g with negative zero printed as 0.
inline std::string format_real(double x) {
  if (x == 0.0) x = 0.0;
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

/// Header "# dim=<d> grid=<N>", then "k_1 ... k_d re im" for every mode with
/// each k_i running over [-N/2, N/2), lexicographic in (k_1, ..., k_d).
inline void write_coefficients(std::ostream& out, const SpectralField& f) {
  const int dim = f.dim();
  const int n = f.grid_size();
  out << "# dim=" << dim << " grid=" << n << "\n";
  std::vector<int> k(static_cast<std::size_t>(dim), -n / 2);
  std::string line;
  for (std::size_t count = 0; count < f.size(); ++count) {
    const Complex c = f.coefficient(k);
    line.clear();
    for (int ki : k) line += std::to_string(ki) + " ";
    line += format_real(c.real()) + " " + format_real(c.imag()) + "\n";
    out << line;
    for (int axis = dim - 1; axis >= 0; --axis) {
      auto& ki = k[static_cast<std::size_t>(axis)];
      if (++ki < n / 2) break;
      ki = -n / 2;
    }
  }
}

namespace detail {

inline int header_value(const std::string& line, const std::string& key) {
  const auto pos = line.find(key + "=");
  if (pos == std::string::npos) fail(ErrorKind::InvalidArgument, "dump header lacks " + key + ": " + line);
  return std::stoi(line.substr(pos + key.size() + 1));
}

}  // namespace detail

/// Reads a coefficient dump; modes absent from the file are zero. Reading
/// stops at end of input or at the first line that is neither a mode nor the header.
inline SpectralField read_coefficients(std::istream& in) {
  std::string line;
  while (std::getline(in, line) && line.empty()) {
  }
  if (line.rfind("# dim=", 0) != 0) fail(ErrorKind::InvalidArgument, "coefficient dump lacks '# dim= grid=' header");
  const int dim = detail::header_value(line, "dim");
  const int n = detail::header_value(line, "grid");
  SpectralField probe = SpectralField::zeros(dim, n);
  std::vector<Complex> coeffs(probe.size());
  std::vector<bool> seen(probe.size(), false);
  std::vector<int> k(static_cast<std::size_t>(dim));
  while (in.peek() != EOF && in.peek() != '#' && !std::isalpha(in.peek())) {
    if (!std::getline(in, line)) break;
    if (line.empty()) continue;
    std::istringstream row(line);
    double re = 0.0, im = 0.0;
    for (auto& ki : k) row >> ki;
    row >> re >> im;
    if (!row) fail(ErrorKind::InvalidArgument, "malformed coefficient line: " + line);
    const std::size_t flat = probe.flat_index(k);
    if (seen[flat]) fail(ErrorKind::InvalidArgument, "duplicate mode in coefficient dump: " + line);
    seen[flat] = true;
    coeffs[flat] = Complex(re, im);
  }
  return SpectralField::from_coefficients(dim, n, std::move(coeffs));
}

inline constexpr const char* kHistoryHeader = "iter,res_e,res_f,sigma,lambda,norm_v,branch,tail_frac";

inline void write_history_csv(std::ostream& out, const std::vector<IterationRecord>& history) {
  out << kHistoryHeader << "\n";
  for (const auto& r : history) {
    out << r.iter << "," << format_real(r.res_e) << "," << format_real(r.res_f) << "," << format_real(r.sigma) << ","
        << format_real(r.lambda) << "," << format_real(r.norm_v) << "," << r.branch << "," << format_real(r.tail_frac)
        << "\n";
  }
}

/// Ordered "key=value" lines.
class Summary {
 public:
  Summary& add(const std::string& key, const std::string& value) {
    entries_.emplace_back(key, value);
    return *this;
  }
  Summary& add(const std::string& key, const char* value) { return add(key, std::string(value)); }
  Summary& add(const std::string& key, double value) { return add(key, format_real(value)); }
  Summary& add(const std::string& key, int value) { return add(key, std::to_string(value)); }
  Summary& add(const std::string& key, bool value) { return add(key, std::string(value ? "true" : "false")); }

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : entries_) out << k << "=" << v << "\n";
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

inline std::map<std::string, std::string> read_summary(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::InvalidArgument, "summary line without '=': " + line);
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

/// Summary of a converged solve: counterterms, iterations, final residuals
/// and the nondegeneracy margins at the solution.
inline Summary solve_summary(const KamResult& result, const ModelConfig& config, const NondegeneracyThresholds& th = {}) {
  Summary s;
  s.add("status", "converged");
  s.add("sigma", result.state.sigma);
  s.add("lambda", result.state.lambda);
  s.add("iterations", result.iterations);
  const double res_e = result.history.empty() ? 0.0 : result.history.back().res_e;
  const double res_f = result.history.empty() ? 0.0 : result.history.back().res_f;
  s.add("res_e", res_e);
  s.add("res_f", res_f);
  s.add("norm_v", sup_norm(result.state.v));
  s.add("under_resolved", result.under_resolved);
  const auto report = check_nondegeneracy(result.state, config, th);
  for (const auto& c : report.checks) {
    s.add("margin_" + c.name, c.value);
    s.add("threshold_" + c.name, c.threshold);
  }
  s.add("nondegenerate", report.passed());
  return s;
}

/// Order-n series dump: the coefficient dump of v^n followed by
/// "sigma_<n>=<value> lambda_<n>=<value>".
inline void write_series_order(std::ostream& out, const PerturbativeSeries& series, int n) {
  const auto i = static_cast<std::size_t>(n);
  write_coefficients(out, series.v.at(i));
  out << "sigma_" << n << "=" << format_real(series.sigma.at(i)) << " lambda_" << n << "="
      << format_real(series.lambda.at(i)) << "\n";
}

struct SeriesOrderRecord {
  SpectralField v;
  double sigma = 0.0;
  double lambda = 0.0;
};

inline SeriesOrderRecord read_series_order(std::istream& in, int n) {
  SeriesOrderRecord r;
  r.v = read_coefficients(in);
  std::string line;
  while (std::getline(in, line) && line.empty()) {
  }
  const std::string sk = "sigma_" + std::to_string(n) + "=";
  const std::string lk = " lambda_" + std::to_string(n) + "=";
  const auto sp = line.find(sk);
  const auto lp = line.find(lk);
  if (sp != 0 || lp == std::string::npos) fail(ErrorKind::InvalidArgument, "malformed series trailer: " + line);
  r.sigma = std::stod(line.substr(sk.size(), lp - sk.size()));
  r.lambda = std::stod(line.substr(lp + lk.size()));
  return r;
}

}  // namespace fkkam
