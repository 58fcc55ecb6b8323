// Acceptance checks on Cora. Reads the dataset from $IDEA_CORA_DIR, either
// prepared by `idea prepare-data` or in the raw LINQS layout; without it every
// criterion is reported UNAVAILABLE and the binary exits 77 (skipped).

#include "idea/eval.hpp"
#include "idea/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>

using namespace idea;

namespace {

using Clock = std::chrono::steady_clock;

constexpr int kSkipped = 77;
int failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

DatasetBundle load_cora(const fs::path& dir) {
  if (fs::exists(dir / "split.tsv")) return load_bundle(dir);
  const Graph raw = fs::exists(dir / "meta.json") ? load_dataset(dir) : load_linqs(dir);
  const Graph lcc = largest_connected_component(raw);
  return {lcc, make_split(lcc, {0.1, 0.1, 0.8}, 0), "cora"};
}

}  // namespace

int main() {
  const char* env = std::getenv("IDEA_CORA_DIR");
  if (env == nullptr || !fs::is_directory(env)) {
    for (int c : {1, 2, 3, 7}) std::printf("criterion %d: UNAVAILABLE  set IDEA_CORA_DIR to a Cora directory\n", c);
    return kSkipped;
  }
  try {
    const DatasetBundle data = load_cora(env);
    RunConfig config;
    config.eval.seeds = "0,1,2";
    const std::vector<std::uint64_t> seeds{0, 1, 2};

    const auto start = Clock::now();
    const TrainState s = fit(data, config.train);
    const Real minutes = std::chrono::duration<Real>(Clock::now() - start).count() / 60;
    const IdeaClassifier idea(s.best_model);
    const Real clean = evaluate(idea, data.graph, data.splits.test);
    report(1, clean >= 0.84 && minutes <= 120,
           fmt("clean test accuracy %.3f (>= 0.840) after %d epochs, %.1f min", clean, config.train.epochs, minutes));

    const GcnModel gcn = fit_gcn(data, config.train);
    const GcnClassifier base(gcn);
    const ScenarioReport ie = run_scenarios(idea, data, {"feature_pgd"}, seeds, config.eval, idea_trainer(config.train));
    const ScenarioReport ge = run_scenarios(base, data, {"feature_pgd"}, seeds, config.eval, gcn_trainer(config.train));
    report(2, ie.avg - ge.avg >= 0.20,
           fmt("feature_pgd target accuracy %.3f vs GCN %.3f (gap %+.1f points, need >= 20)", ie.avg, ge.avg,
               100 * (ie.avg - ge.avg)));

    const Real gcn_clean = evaluate(base, data.graph, data.splits.test);
    const ScenarioReport ip =
        run_scenarios(idea, data, {"random_poison:0.2"}, {0}, config.eval, idea_trainer(config.train));
    const ScenarioReport gp =
        run_scenarios(base, data, {"random_poison:0.2"}, {0}, config.eval, gcn_trainer(config.train));
    const Real idea_drop = clean - ip.avg;
    const Real gcn_drop = gcn_clean - gp.avg;
    report(3, idea_drop <= 0.5 * std::max<Real>(gcn_drop, 0),
           fmt("random_poison:0.2 drop %.1f points vs GCN %.1f points (need <= half)", 100 * idea_drop,
               100 * gcn_drop));

    std::string line;
    Real full_avg = 0, full_std = 0;
    bool ordered = true;
    for (Variant v : {Variant::full, Variant::no_LI, Variant::no_LE, Variant::no_LI_LE, Variant::no_LD}) {
      const ScenarioReport r = run_ablation(data, config, v);
      line += fmt(" %s %.3f/%.3f", std::string(variant_name(v)).c_str(), r.avg, r.std_across_scenarios);
      if (v == Variant::full) {
        full_avg = r.avg;
        full_std = r.std_across_scenarios;
      } else if (v == Variant::no_LD) {
        ordered = ordered && r.std_across_scenarios >= full_std;
      } else {
        ordered = ordered && full_avg >= r.avg;
      }
    }
    report(7, ordered, "AVG/std" + line);
  } catch (const std::exception& e) {
    std::printf("error: %s\n", e.what());
    return 1;
  }
  std::printf("%s: %d criteria failed\n", failures == 0 ? "PASS" : "FAIL", failures);
  return failures == 0 ? 0 : 1;
}
