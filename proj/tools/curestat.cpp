// curestat: cure-rate estimation from current-status data.
//
//   curestat simulate  --p 0.3 --f-rate 2 --g-rate 1 --n 100 --seed 7 --out data.csv
//   curestat trace     --in data.csv --out trace.csv
//   curestat cv        --in data.csv --out cv.csv
//   curestat estimate  --in data.csv --method cv-m2 --json-summary est.json
//   curestat mc        --p 0.3 --f-rate 2 --g-rate 1 --n 100 --reps 5000 --out z.csv
//   curestat thinning  --p 0.3 --f-rate 2 --g-rate 1 --n 1000 --expected-tail 20
//
// Exit codes: 0 success, 2 usage or validation error, 3 runtime or data error.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "curestat/asymptotics.hpp"
#include "curestat/csv.hpp"
#include "curestat/estimators.hpp"
#include "curestat/model.hpp"
#include "curestat/npmle.hpp"

namespace {

using namespace curestat;
using nlohmann::json;
using detail::format_double;

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct RunConfig {
  double p = 0.3;
  double f_rate = 2.0;
  double g_rate = 1.0;
  std::size_t n = 100;
  std::uint64_t seed = 1;
  std::size_t reps = 5000;
  unsigned threads = 0;

  std::string in;
  std::string out;
  std::string json_summary;

  std::string method = "cv-m2";
  std::size_t index = 0;
  double quantile = 0.5;
  std::optional<std::size_t> guard;
  bool keep_degenerate = false;
  std::string variance_plugin = "p1";
  double level = 0.95;

  std::string cutoff_rule = "undersmoothed";
  double cutoff_value = 0.0;
  std::string studentize = "known-p";
  std::vector<double> expected_tails{20.0};

  MixtureSpec mixture() const { return MixtureSpec::exponential(p, f_rate, g_rate); }
};

/// Writes to the file at `path`, or to stdout when the path is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw DataError("cannot write " + path);
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  bool to_stdout() const { return !file_; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

json number_or_null(std::optional<double> v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

void write_summary(const std::string& path, const json& j) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
}

json empty_summary() {
  return json{{"pHat1", nullptr},   {"pHat2", nullptr},    {"cutIndex", nullptr},
              {"cutThreshold", nullptr}, {"tailCount", nullptr}, {"ciLo", nullptr},
              {"ciHi", nullptr},    {"ksNormal", nullptr}, {"ksHalfNormal", nullptr}};
}

VariancePlugin parse_variance_plugin(const std::string& s) {
  return s == "p2" ? VariancePlugin::P2 : VariancePlugin::P1;
}

// Human-readable text goes to stderr when stdout carries CSV.
std::ostream& report_stream(const Output& out) { return out.to_stdout() ? std::cerr : std::cout; }

int cmd_simulate(const RunConfig& cfg) {
  const auto sample = simulate(cfg.mixture(), cfg.n, cfg.seed);
  write_csv(sample, cfg.out);
  std::size_t ones = 0;
  for (const auto& r : sample.records) ones += static_cast<std::size_t>(r.delta);
  std::cout << "n = " << sample.size() << "\n"
            << "delta_bar = " << format_double(static_cast<double>(ones) / sample.size()) << "\n";
  return 0;
}

int cmd_trace(const RunConfig& cfg) {
  const auto tr = trace(sort_with_concomitants(read_csv(cfg.in)));
  Output out(cfg.out);
  auto& os = out.stream();
  os << "index,y,p1,p2\n";
  for (const auto& e : tr.entries) {
    os << e.index << ',' << format_double(e.y) << ',' << format_double(e.p1) << ','
       << format_double(e.p2) << '\n';
  }
  return 0;
}

int cmd_cv(const RunConfig& cfg) {
  const auto tr = trace(sort_with_concomitants(read_csv(cfg.in)));
  const auto variance = parse_variance_plugin(cfg.variance_plugin);
  const CutoffGuard guard{cfg.guard.value_or(kDefaultGuard), !cfg.keep_degenerate};
  std::optional<CvCurve> m1;
  try {
    m1 = cv_m1_curve(tr, variance);
  } catch (const DataError& e) {
    std::cerr << "warning: " << e.what() << "; m1 columns left empty\n";
  }
  const CvCurve m2 = cv_m2_curve(tr, variance);

  Output out(cfg.out);
  auto& os = out.stream();
  os << "index,y,m1_var,m1_bias2,m1,m2_var,m2_bias2,m2\n";
  for (std::size_t k = 0; k < m2.points.size(); ++k) {
    const auto& b = m2.points[k];
    os << b.index << ',' << format_double(b.y) << ',';
    if (m1) {
      const auto& a = m1->points[k];
      os << format_double(a.variance) << ',' << format_double(a.bias2) << ','
         << format_double(a.objective) << ',';
    } else {
      os << ",,,";
    }
    os << format_double(b.variance) << ',' << format_double(b.bias2) << ','
       << format_double(b.objective) << '\n';
  }

  auto& rs = report_stream(out);
  const auto& pi = m2.plugins;
  rs << "delta_bar = " << format_double(pi.delta_bar) << "\n"
     << "p2_bar = " << format_double(pi.p2_bar) << "\n"
     << "alpha_hat = " << (pi.alpha_hat ? format_double(*pi.alpha_hat) : "invalid") << "\n"
     << "guard: tail count >= " << guard.min_tail
     << (guard.skip_degenerate ? ", zero-variance points skipped" : "") << "\n";
  auto print_choice = [&](const char* name, const CvCurve& c) {
    const auto ch = select_cutoff(c, guard);
    const auto est = estimate_cure(tr, ch);
    rs << name << ": index = " << ch.index << ", y = " << format_double(ch.threshold)
       << ", tail = " << ch.tail_count << ", p2 = " << format_double(1.0 - est.p_hat2) << "\n";
  };
  if (m1) print_choice("m1", *m1);
  print_choice("m2", m2);
  return 0;
}

int cmd_estimate(const RunConfig& cfg) {
  const auto sorted = sort_with_concomitants(read_csv(cfg.in));
  const auto tr = trace(sorted);
  const auto variance = parse_variance_plugin(cfg.variance_plugin);
  const bool cv = cfg.method == "cv-m1" || cfg.method == "cv-m2";
  const std::size_t min_tail = cfg.guard.value_or(cv ? kDefaultGuard : 1);

  CutoffChoice choice{};
  if (cfg.method == "cv-m1") {
    choice = select_cutoff(cv_m1_curve(tr, variance), {min_tail, !cfg.keep_degenerate});
  } else if (cfg.method == "cv-m2") {
    choice = select_cutoff(cv_m2_curve(tr, variance), {min_tail, !cfg.keep_degenerate});
  } else if (cfg.method == "theoretical-exp") {
    std::cerr << "warning: theoretical-exp uses the supplied model parameters "
                 "(--p, --f-rate, --g-rate) as if they were known\n";
    const double x = theoretical_cutoff_exponential(static_cast<double>(tr.n), cfg.p, cfg.f_rate,
                                                    cfg.g_rate);
    choice = cutoff_at_threshold(tr, x, min_tail, CutoffMethod::TheoreticalExponential);
  } else if (cfg.method == "fixed-index") {
    detail::require(cfg.index >= 1 && cfg.index <= tr.n,
                    "--index must lie in 1.." + std::to_string(tr.n));
    choice = cutoff_at_index(tr, cfg.index, min_tail);
  } else {
    choice = cutoff_at_quantile(tr, cfg.quantile, min_tail);
  }

  const auto est = estimate_cure(tr, choice);
  const double p1 = 1.0 - est.p_hat1;  // estimates 1 - p
  const double z = std_normal_quantile(0.5 + cfg.level / 2.0);
  const double half = z * std::sqrt(est.p_hat1 * p1) / std::sqrt(static_cast<double>(est.tail_count));
  const double lo = std::clamp(p1 - half, 0.0, 1.0);
  const double hi = std::clamp(p1 + half, 0.0, 1.0);

  std::cout << "method = " << to_string(choice.method) << "\n"
            << "cut index = " << choice.index << "\n"
            << "cut threshold = " << format_double(choice.threshold) << "\n"
            << "tail count = " << est.tail_count << "\n"
            << "p_hat1 = " << format_double(est.p_hat1) << "\n"
            << "p_hat2 = " << format_double(est.p_hat2) << "\n"
            << cfg.level * 100 << "% CI for 1 - p = [" << format_double(lo) << ", "
            << format_double(hi) << "]\n";

  json j = empty_summary();
  j["pHat1"] = est.p_hat1;
  j["pHat2"] = est.p_hat2;
  j["cutIndex"] = choice.index;
  j["cutThreshold"] = choice.threshold;
  j["tailCount"] = est.tail_count;
  j["ciLo"] = lo;
  j["ciHi"] = hi;
  write_summary(cfg.json_summary, j);
  return 0;
}

CutoffRule parse_cutoff_rule(const RunConfig& cfg) {
  if (cfg.cutoff_rule == "optimal") return CutoffRule::optimal();
  if (cfg.cutoff_rule == "expected-tail") return CutoffRule::expected_tail(cfg.cutoff_value);
  if (cfg.cutoff_rule == "threshold") return CutoffRule::threshold(cfg.cutoff_value);
  return CutoffRule::undersmoothed();
}

int cmd_mc(const RunConfig& cfg) {
  McConfig mc{cfg.mixture(), cfg.n, cfg.reps, parse_cutoff_rule(cfg),
              cfg.studentize == "plug-in" ? Studentization::PlugIn : Studentization::KnownP,
              cfg.seed, cfg.threads};
  const auto res = run_mc(mc);

  Output out(cfg.out);
  auto& os = out.stream();
  os << "rep,z1,z2\n";
  for (std::size_t k = 0; k < res.z1.size(); ++k) {
    os << res.rep[k] << ',' << format_double(res.z1[k]) << ',' << format_double(res.z2[k]) << '\n';
  }

  auto& rs = report_stream(out);
  rs << "cut-off rule = " << to_string(mc.cutoff.kind) << ", x_n = " << format_double(res.cutoff)
     << "\n"
     << "replications = " << cfg.reps << ", retained = " << res.z1.size()
     << ", skipped = " << res.skipped << "\n"
     << "statistic  mean       sd         reference_mean  reference_sd  ks\n";
  auto row = [&](const char* name, const SampleSummary& s, double rm, double rsd, double ks) {
    rs << name << "         " << s.mean << "  " << s.sd << "  " << rm << "  " << rsd << "  " << ks
       << "\n";
  };
  row("z1", res.z1_summary, 0.0, 1.0, res.ks_z1_normal);
  row("z2", res.z2_summary, std::sqrt(2.0 / std::numbers::pi), std::sqrt(1.0 - 2.0 / std::numbers::pi),
      res.ks_z2_half_normal);

  json j = empty_summary();
  j["cutThreshold"] = res.cutoff;
  j["ksNormal"] = number_or_null(res.z1.empty() ? std::nullopt : std::optional(res.ks_z1_normal));
  j["ksHalfNormal"] =
      number_or_null(res.z1.empty() ? std::nullopt : std::optional(res.ks_z2_half_normal));
  write_summary(cfg.json_summary, j);
  return 0;
}

int cmd_thinning(const RunConfig& cfg) {
  const auto stats =
      thinning_check(cfg.mixture(), cfg.n, cfg.expected_tails, cfg.reps, cfg.seed, cfg.threads);
  Output out(cfg.out);
  auto& os = out.stream();
  os << "expected_tail,threshold,reps,mean_n1,mean_n0,var_mean_n1,var_mean_n0,corr\n";
  for (const auto& s : stats) {
    os << format_double(s.expected_tail) << ',' << format_double(s.threshold) << ',' << s.reps
       << ',' << format_double(s.mean_n1) << ',' << format_double(s.mean_n0) << ','
       << format_double(s.var_over_mean_n1) << ',' << format_double(s.var_over_mean_n0) << ','
       << format_double(s.correlation) << '\n';
  }
  return 0;
}

void add_model_flags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--p", cfg.p, "cure probability")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--f-rate", cfg.f_rate, "exponential event-time rate")
      ->check(CLI::PositiveNumber);
  sub->add_option("--g-rate", cfg.g_rate, "exponential inspection-time rate")
      ->check(CLI::PositiveNumber);
}

void add_sampling_flags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--n", cfg.n, "sample size")->check(CLI::PositiveNumber);
  sub->add_option("--seed", cfg.seed, "generator seed");
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"Cure-rate estimation from current-status data"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "draw a dataset from the exponential cure model");
  add_model_flags(sim, cfg);
  add_sampling_flags(sim, cfg);
  sim->add_option("--out", cfg.out, "output CSV")->required();

  auto* tr = app.add_subcommand("trace", "p1/p2 tail-average trace");
  tr->add_option("--in", cfg.in, "input CSV")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", cfg.out, "output CSV (default stdout)");

  auto* cv = app.add_subcommand("cv", "cross-validation curves");
  cv->add_option("--in", cfg.in, "input CSV")->required()->check(CLI::ExistingFile);
  cv->add_option("--out", cfg.out, "output CSV (default stdout)");
  cv->add_option("--guard", cfg.guard, "minimum tail count")->check(CLI::PositiveNumber);
  cv->add_flag("--keep-degenerate", cfg.keep_degenerate, "do not skip zero-variance points");
  cv->add_option("--variance-plugin", cfg.variance_plugin, "variance plug-in")
      ->check(CLI::IsMember({"p1", "p2"}));

  auto* est = app.add_subcommand("estimate", "cure-rate estimates and confidence interval");
  est->add_option("--in", cfg.in, "input CSV")->required()->check(CLI::ExistingFile);
  est->add_option("--method", cfg.method, "cut-off method")
      ->check(CLI::IsMember(
          {"cv-m1", "cv-m2", "theoretical-exp", "fixed-index", "fixed-quantile"}));
  est->add_option("--index", cfg.index, "1-based cut-off index for fixed-index")
      ->check(CLI::PositiveNumber);
  est->add_option("--quantile", cfg.quantile, "y quantile for fixed-quantile")
      ->check(CLI::Range(0.0, 1.0));
  est->add_option("--guard", cfg.guard, "minimum tail count")->check(CLI::PositiveNumber);
  est->add_flag("--keep-degenerate", cfg.keep_degenerate, "do not skip zero-variance points");
  est->add_option("--variance-plugin", cfg.variance_plugin, "variance plug-in")
      ->check(CLI::IsMember({"p1", "p2"}));
  est->add_option("--level", cfg.level, "confidence level")->check(CLI::Range(0.5, 0.999999));
  est->add_option("--json-summary", cfg.json_summary, "write a JSON summary");
  add_model_flags(est, cfg);

  auto* mc = app.add_subcommand("mc", "Monte Carlo study of the studentized statistics");
  add_model_flags(mc, cfg);
  add_sampling_flags(mc, cfg);
  mc->add_option("--reps", cfg.reps, "replications")->check(CLI::PositiveNumber);
  mc->add_option("--cutoff", cfg.cutoff_rule, "cut-off rule")
      ->check(CLI::IsMember({"optimal", "undersmoothed", "expected-tail", "threshold"}));
  mc->add_option("--cutoff-value", cfg.cutoff_value,
                 "expected tail count or threshold for the matching rule")
      ->check(CLI::NonNegativeNumber);
  mc->add_option("--studentize", cfg.studentize, "studentization")
      ->check(CLI::IsMember({"known-p", "plug-in"}));
  mc->add_option("--threads", cfg.threads, "worker threads (0 = all cores)");
  mc->add_option("--out", cfg.out, "output CSV (default stdout)");
  mc->add_option("--json-summary", cfg.json_summary, "write a JSON summary");

  auto* thin = app.add_subcommand("thinning", "tail-count moments at thresholds");
  add_model_flags(thin, cfg);
  add_sampling_flags(thin, cfg);
  thin->add_option("--reps", cfg.reps, "replications")->check(CLI::PositiveNumber);
  thin->add_option("--expected-tail", cfg.expected_tails, "expected tail counts n(1 - G(x))")
      ->check(CLI::PositiveNumber);
  thin->add_option("--threads", cfg.threads, "worker threads (0 = all cores)");
  thin->add_option("--out", cfg.out, "output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  if (est->parsed() && cfg.method == "theoretical-exp") {
    for (const char* flag : {"--p", "--f-rate", "--g-rate"}) {
      if (est->count(flag) == 0) {
        std::cerr << "error: --method theoretical-exp requires " << flag << '\n';
        return kExitUsage;
      }
    }
  }
  if (est->parsed() && cfg.method == "fixed-index" && est->count("--index") == 0) {
    std::cerr << "error: --method fixed-index requires --index\n";
    return kExitUsage;
  }

  const std::map<CLI::App*, int (*)(const RunConfig&)> commands{
      {sim, cmd_simulate}, {tr, cmd_trace},   {cv, cmd_cv},
      {est, cmd_estimate}, {mc, cmd_mc},      {thin, cmd_thinning}};
  try {
    for (const auto& [sub, run] : commands) {
      if (sub->parsed()) return run(cfg);
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
