// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <sys/wait.h>
#include <tuple>

#include "rtriage/error.hpp"
#include "rtriage/evaluation.hpp"
#include "rtriage/featurize.hpp"
#include "rtriage/pipeline.hpp"
#include "rtriage/summarizer.hpp"
#include "rtriage/synth.hpp"
#include "rtriage/training_store.hpp"
#include "test_support.hpp"

using namespace rtriage;
using namespace rtriage::testing;

namespace {

// Pinned tolerances and limits.
constexpr double kHarmonicTol = 1e-12;
constexpr double kRankTol = 1e-9;
constexpr double kTable3Margin = 0.05;
constexpr double kTau = 0.95;
constexpr int kCap = 100;
constexpr double kMetricsSeconds = 10, kKnnSeconds = 30, kContextSeconds = 10, kTable3Seconds = 180;

struct Outcome {
  bool pass = true;
  std::string detail;
  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << std::fixed << v;
  return s.str();
}

void check_time(Outcome& o, Clock::time_point t0, double limit) {
  const double s = seconds_since(t0);
  if (s >= limit) o.fail("took " + fmt(s, 1) + " s, limit " + fmt(limit, 0) + " s");
  if (o.pass) o.detail += (o.detail.empty() ? "" : ", ") + fmt(s, 2) + " s";
}

Labels random_labels(Rng& rng, std::size_t n, std::size_t classes) {
  Labels out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("c" + std::to_string(rng.index(classes)));
  return out;
}

FeatureVector random_fv(Rng& rng, std::size_t dim) {
  FeatureVector f;
  f.categorical = {static_cast<std::uint32_t>(rng.index(3)), static_cast<std::uint32_t>(4 + rng.index(3)),
                   static_cast<std::uint32_t>(8 + rng.index(3)), static_cast<std::uint32_t>(12 + rng.index(3))};
  f.categorical_width = 16;
  f.text = random_unit(rng, dim);
  return f;
}

// ---- criteria ---------------------------------------------------------------

Outcome metrics_oracle() {
  Outcome o;
  Rng rng(1001);
  const auto t0 = Clock::now();
  for (int round = 0; round < 1000 && o.pass; ++round) {
    const std::size_t n = 1 + rng.index(500);
    const std::size_t classes = 1 + rng.index(20);
    const Labels t = random_labels(rng, n, classes), p = random_labels(rng, n, classes);
    if (f1_macro(t, p) != oracle::f1_macro(t, p)) o.fail("f1_macro differs in round " + std::to_string(round));
    if (accuracy(t, p) != oracle::accuracy(t, p)) o.fail("accuracy differs in round " + std::to_string(round));
    const auto c = confusion(t, p);
    const auto r = oracle::confusion(t, p);
    if (c.labels != r.labels || c.counts != r.counts) o.fail("confusion differs in round " + std::to_string(round));
    const double a = rng.uniform(), b = rng.uniform();
    if (std::abs(f1_comb(a, b) - 2 * a * b / (a + b)) > kHarmonicTol) o.fail("f1_comb off the harmonic mean");
  }
  if (o.pass) o.detail = "1000 label arrays";
  check_time(o, t0, kMetricsSeconds);
  return o;
}

Outcome knn_oracle() {
  Outcome o;
  Rng rng(1002);
  const auto t0 = Clock::now();
  std::size_t queries = 0;
  for (int round = 0; round < 200 && o.pass; ++round) {
    const std::size_t n = 1 + rng.index(1000);
    const std::size_t dim = 2 + rng.index(12);
    std::vector<FeatureVector> v;
    std::vector<std::string> labels, group;
    for (std::size_t i = 0; i < n; ++i) {
      v.push_back(random_fv(rng, dim));
      labels.push_back("L" + std::to_string(rng.index(1 + rng.index(6))));
      if (rng.index(25) == 0) {
        char id[16];
        std::snprintf(id, sizeof id, "T%05zu", i);
        group.push_back(id);
      }
    }
    Hyperparameters hp;
    hp.k_neighbors = 1 + static_cast<int>(rng.index(11));
    hp.w_categorical = rng.uniform();
    hp.w_textual = 0.1 + rng.uniform();
    hp.certainty_threshold = 0.5 + 0.5 * rng.uniform();
    const auto s = snapshot_of(v, labels, hp, group);
    for (int q = 0; q < 5; ++q, ++queries) {
      // Reusing a training vector produces exact distance ties.
      const FeatureVector query = q == 0 ? v[rng.index(n)] : random_fv(rng, dim);
      const auto got = predict(s, query, "q");
      const auto want = oracle::knn(s, query);
      if (got.label_id != want.label || got.certainty != want.certainty || got.flagged != want.flagged ||
          got.flag_reason != want.reason)
        o.fail("prediction differs in round " + std::to_string(round));
      std::vector<std::string> ids;
      for (const auto& nb : got.neighbors) ids.push_back(nb.item_id);
      if (ids != want.neighbor_ids) o.fail("neighbors differ in round " + std::to_string(round));
    }
  }
  if (o.pass) o.detail = "200 snapshots, " + std::to_string(queries) + " queries";
  check_time(o, t0, kKnnSeconds);
  return o;
}

Outcome context_oracle() {
  Outcome o;
  Rng rng(1003);
  const auto t0 = Clock::now();
  std::size_t targets = 0;
  for (int round = 0; round < 500 && o.pass; ++round) {
    const ReplayLog log = random_log(rng, 500, "R" + std::to_string(round));
    for (const auto& e : log.events) {
      if (e.status != EventStatus::failed) continue;
      ++targets;
      const ContextSet got = collect(log, e.event_id);
      const auto want = oracle::context(log, e.event_id);
      bool same = got.items.size() == want.size() && !got.truncated;
      for (std::size_t i = 0; same && i < want.size(); ++i)
        same = got.items[i].seq_no == want[i].seq_no && got.items[i].statement_hash == want[i].statement_hash &&
               got.items[i].status == want[i].status;
      if (!same) {
        o.fail("context of " + e.event_id + " differs");
        break;
      }
    }
  }
  if (o.pass) o.detail = "500 replays, " + std::to_string(targets) + " failed targets";
  check_time(o, t0, kContextSeconds);
  return o;
}

Outcome problem_group_oracle() {
  Outcome o;
  Rng rng(1004);
  for (int round = 0; round < 60 && o.pass; ++round) {
    const std::size_t n = 2 + rng.index(199);
    std::vector<Tokens> texts;
    std::vector<std::string> labels, ids;
    for (std::size_t i = 0; i < n; ++i) {
      Tokens t;
      const std::size_t len = 1 + rng.index(4);
      for (std::size_t j = 0; j < len; ++j) t.push_back("t" + std::to_string(rng.index(8)));
      texts.push_back(t);
      labels.push_back("L" + std::to_string(rng.index(4)));
      ids.push_back("I" + std::to_string(i));
    }
    // A planted cross-class duplicate must always be a member.
    texts.push_back({"planted", "duplicate", "text"});
    texts.push_back({"planted", "duplicate", "text"});
    labels.push_back("P1");
    labels.push_back("P2");
    ids.push_back("planted_a");
    ids.push_back("planted_b");

    const auto got = detect_problem_group(texts, labels, ids, kTau);
    const std::set<std::string> members(got.begin(), got.end());
    if (members != oracle::problem_group(texts, labels, ids, kTau))
      o.fail("group differs in round " + std::to_string(round));
    if (!members.count("planted_a") || !members.count("planted_b"))
      o.fail("identical cross-class texts missing in round " + std::to_string(round));
  }
  if (o.pass) o.detail = "60 corpora up to 202 items, tau 0.95";
  return o;
}

// Shared by the two directional criteria.
struct OverlapData {
  Dataset data;
  double build_seconds = 0;
};

const OverlapData& overlap_data() {
  static const OverlapData d = [] {
    OverlapData out;
    const auto t0 = Clock::now();
    const SynthResult r = generate(overlap_scenario(7, 3, 3000));
    OfflineEndpoint ep;
    Summarizer summarizer(ep, {});
    out.data = build_dataset(r.log, r.truth, &summarizer);
    out.build_seconds = seconds_since(t0);
    return out;
  }();
  return d;
}

Outcome table3_direction() {
  Outcome o;
  const auto t0 = Clock::now();
  const Dataset& data = overlap_data().data;
  FeatureConfig base, with_summary;
  base.mode = FeatureMode::em_ss;
  with_summary.mode = FeatureMode::em_ss_summary;
  const double a = cross_validate(data, base, 7).mean_f1_macro;
  const double b = cross_validate(data, with_summary, 7).mean_f1_macro;
  o.detail = std::to_string(data.size()) + " failed events, em_ss " + fmt(100 * a, 2) + ", em_ss_summary " +
             fmt(100 * b, 2) + ", gain " + fmt(100 * (b - a), 2) + " points";
  if (b - a < kTable3Margin) o.fail(o.detail + " (below the 5-point margin)");
  check_time(o, t0, kTable3Seconds);
  return o;
}

std::string run_cli(const std::string& args, int& code) {
  const std::string cmd = std::string(RTRIAGE_CLI) + " " + args + " 2>/dev/null";
  std::string out;
  code = -1;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return out;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) out.append(buf, n);
  const int status = ::pclose(p);
  code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

Outcome table2_direction() {
  Outcome o;
  const Dataset& data = overlap_data().data;
  const auto rows = compare(data, CompareOptions{});
  for (const auto& r : rows)
    if (r.cd_f1_macro < r.ed_f1_macro)
      o.fail(std::string(to_string(r.mode)) + "/" + std::string(to_string(r.vectorizer)) + ": CD " +
             fmt(100 * r.cd_f1_macro, 2) + " < ED " + fmt(100 * r.ed_f1_macro, 2));
  if (rows.size() != 6) o.fail("expected 6 rows, got " + std::to_string(rows.size()));

  TempDir dir("rtriage-acceptance");
  write_dataset(data, dir / "data.jsonl");
  int code = 0;
  const std::string table = run_cli("compare --dataset " + (dir / "data.jsonl").string(), code);
  if (code != 0) o.fail("compare subcommand exited " + std::to_string(code));
  else if (table != format_compare_table(rows)) o.fail("compare subcommand output differs from the module table");
  if (o.pass) {
    double worst = 1;
    for (const auto& r : rows) worst = std::min(worst, r.cd_f1_macro - r.ed_f1_macro);
    o.detail = "6 rows, smallest CD-ED margin " + fmt(100 * worst, 2) + " points";
  }
  return o;
}

Outcome flag_precedence() {
  Outcome o;
  FeatureVector v;
  v.categorical = {0, 4, 8, 12};
  v.categorical_width = 16;
  v.text = {1, 0};
  Hyperparameters hp;
  hp.k_neighbors = 3;
  const auto s = snapshot_of({v, v, v}, {"A", "A", "A"}, hp, {"T00001"});
  const auto p = predict(s, v, "q");
  if (p.certainty != 1.0) o.fail("certainty " + fmt(p.certainty) + ", expected 1");
  if (!p.flagged || p.flag_reason != FlagReason::problem_group) o.fail("not flagged as problem_group");
  if (o.pass) o.detail = "certainty 1.0 with one problem-group neighbor flags problem_group";
  return o;
}

Outcome harvest_rules() {
  Outcome o;
  Rng rng(1005);
  const double theta = 0.9;
  int capped_rounds = 0;
  for (int round = 0; round < 200 && o.pass; ++round) {
    std::vector<HarvestInput> in;
    std::vector<OperatorAction> actions;
    const std::size_t n = rng.index(1200);
    for (std::size_t i = 0; i < n; ++i) {
      HarvestInput h;
      const std::string id = "e" + std::to_string(i);
      const std::string stmt = "select " + std::to_string(rng.index(rng.index(2) ? 5000 : 30));
      h.event = failed_event(id, "S1", i, stmt, "boom", 100, "R" + std::to_string(rng.index(2)));
      h.prediction.event_id = id;
      h.prediction.label_id = "L" + std::to_string(rng.index(2));
      h.prediction.certainty = rng.index(3) ? 1.0 : rng.uniform();
      h.prediction.flagged = rng.index(6) == 0;
      if (h.prediction.flagged) h.prediction.flag_reason = FlagReason::problem_group;
      in.push_back(h);
      if (rng.index(6) == 0) {
        OperatorAction a;
        a.kind = rng.index(4) ? ActionKind::reclassify : ActionKind::confirm;
        a.event_id = id;
        if (a.kind == ActionKind::reclassify) a.label_id = "L" + std::to_string(rng.index(3));
        a.timestamp = "2026-10-0" + std::to_string(1 + rng.index(9)) + "T00:00:00Z";
        actions.push_back(a);
      }
    }
    const auto latest = latest_label_actions(actions);
    std::map<std::string, const HarvestInput*> by_id;
    for (const auto& h : in) by_id[h.event.event_id] = &h;

    const auto out = harvest(in, actions, theta, kCap);
    std::map<std::pair<std::string, std::string>, int> counts;
    std::set<std::string> keys;
    for (const auto& le : out) {
      const HarvestInput& h = *by_id.at(le.event.event_id);
      if (auto a = latest.find(le.event.event_id); a != latest.end()) {
        const std::string want =
            a->second.kind == ActionKind::reclassify ? a->second.label_id : h.prediction.label_id;
        if (le.label.label_id != want || le.label_source != LabelSource::operator_reclassified)
          o.fail("operator label did not win for " + le.event.event_id);
      } else if (h.prediction.flagged || h.prediction.certainty < theta ||
                 le.label_source != LabelSource::predicted_certain || le.label.label_id != h.prediction.label_id) {
        o.fail("uncertain or flagged prediction harvested: " + le.event.event_id);
      }
      if (++counts[std::make_pair(le.event.replay_id, le.label.label_id)] > kCap) o.fail("cap exceeded");
      if (!keys.insert(dedup_key(le)).second) o.fail("duplicate key in harvest output");
    }
    if (dedup(out) != out) o.fail("dedup is not idempotent on the harvest output");
    for (const auto& [key, c] : counts) capped_rounds += c == kCap;
    // Walking eligible events in (replay, seq_no) order, an event may only be
    // missing when an earlier one shares its dedup key or its group is full.
    std::vector<const HarvestInput*> order;
    for (const auto& h : in) order.push_back(&h);
    std::stable_sort(order.begin(), order.end(), [](const HarvestInput* a, const HarvestInput* b) {
      return std::tie(a->event.replay_id, a->event.seq_no) < std::tie(b->event.replay_id, b->event.seq_no);
    });
    std::set<std::string> output_ids, earlier;
    for (const auto& le : out) output_ids.insert(le.event.event_id);
    for (const HarvestInput* h : order) {
      const auto a = latest.find(h->event.event_id);
      if (a == latest.end() && (h->prediction.flagged || h->prediction.certainty < theta)) continue;
      LabeledEvent probe;
      probe.event = h->event;
      const std::string label =
          a != latest.end() && a->second.kind == ActionKind::reclassify ? a->second.label_id : h->prediction.label_id;
      probe.label = {label, label};
      const bool first = earlier.insert(dedup_key(probe)).second;
      if (!output_ids.count(h->event.event_id) && first && counts[std::make_pair(h->event.replay_id, label)] < kCap)
        o.fail("eligible event dropped: " + h->event.event_id);
    }
  }

  if (capped_rounds == 0) o.fail("no stream reached the cap");

  // Journal replay reproduces the stored state byte for byte.
  TempDir dir("rtriage-acceptance");
  std::string before;
  {
    TrainingStore store(std::make_shared<Journal>(dir / "journal.jsonl"));
    store.seed(separable_dataset(3, 20));
    for (int i = 0; i < 10; ++i) {
      OperatorAction a;
      a.kind = ActionKind::reclassify;
      a.event_id = "E0_" + std::to_string(i);
      a.label_id = "class_c";
      a.timestamp = "2026-10-01T00:00:0" + std::to_string(i) + "Z";
      store.record_action(a);
    }
    store.assemble_new({labeled(failed_event("x1", "S9", 9, "select 9", "late"), "class_b")}, "harvest:R9");
    before = store.state_json();
  }
  TrainingStore replayed(std::make_shared<Journal>(dir / "journal.jsonl"));
  if (replayed.state_json() != before) o.fail("journal replay state differs");
  if (o.pass) o.detail = "200 random streams, " + std::to_string(capped_rounds) + " capped groups, journal replay identical";
  return o;
}

Outcome summarizer_offline() {
  Outcome o;
  // Full pipeline twice with fresh offline endpoints.
  const SynthResult r = generate(overlap_scenario(11, 3, 300));
  std::string runs[2];
  std::map<std::string, std::string> summaries[2];
  for (int run = 0; run < 2; ++run) {
    OfflineEndpoint ep;
    if (!ep.offline()) o.fail("offline endpoint reports network use");
    Summarizer summarizer(ep, {});
    const Dataset data = build_dataset(r.log, r.truth, &summarizer);
    FeatureConfig cfg;
    cfg.mode = FeatureMode::em_ss_summary;
    const ModelSnapshot snap = train_snapshot(data, cfg, "v1");
    const auto result = classify_replay(snap, r.log, &summarizer);
    std::ostringstream s;
    write_predictions(result.predictions, s);
    runs[run] = s.str();
    summaries[run] = result.summaries;
  }
  if (runs[0].empty() || runs[0] != runs[1] || summaries[0] != summaries[1])
    o.fail("two offline runs differ");

  const char* reference =
      "[{'statement type': 'CALL',\n'status': 'failed',\n'error': 'Operation canceled and transaction rolled back\n"
      " due to exception.', 'objects': 'ABC1, ABC2'},\n{'statement type': 'CREATE VIEW', 'status': 'failed',\n"
      "'error': 'Connection error', 'objects': 'MN1, MN2'}]";
  const FailureSummary parsed = parse_summary_response(reference);
  const std::vector<SummaryGroup> want = {
      {"CALL", "failed", "Operation canceled and transaction rolled back due to exception.", {"ABC1", "ABC2"}},
      {"CREATE VIEW", "failed", "Connection error", {"MN1", "MN2"}}};
  if (parsed.groups != want) o.fail("reference response parsed to different groups");

  FailureSummary longer;
  std::string words;
  for (int i = 0; i < 31; ++i) words += (i ? " w" : "w") + std::to_string(i);
  longer.groups = {{"CALL", "failed", words, {"A"}}};
  const auto v = validate_summary(longer, 30);
  if (!v.ok() || v.warnings.size() != 1 || preprocess(longer.groups[0].error).size() != 30)
    o.fail("31-word error not truncated to 30 with a warning");

  // Forced budget L=500.
  ContextSet big;
  big.target_event_id = "t";
  for (int i = 0; i < 80; ++i) {
    ContextItem it;
    it.statement_string = "CREATE TABLE T" + std::to_string(i) + " (A INT, B VARCHAR(20))";
    it.statement_hash = hash_statement(it.statement_string);
    it.status = EventStatus::skipped;
    it.skip_reason = "Skipped";
    big.items.push_back(it);
  }
  class Recording final : public CompletionEndpoint {
   public:
    std::string complete(const std::string& prompt) override {
      prompts.push_back(prompt);
      return inner.complete(prompt);
    }
    std::string model() const override { return "recording"; }
    bool offline() const override { return true; }
    OfflineEndpoint inner;
    std::vector<std::string> prompts;
  } rec;
  SummarizerOptions opt;
  opt.token_budget = 500;
  Summarizer chunked(rec, opt);
  const auto merged = chunked.summarize(big);
  if (merged.provenance != SummaryProvenance::chunk_merged || rec.prompts.size() < 2)
    o.fail("over-budget context did not take the chunked path");
  for (const auto& p : rec.prompts)
    if (estimate_tokens(p) > 500) o.fail("chunk prompt over budget: " + std::to_string(estimate_tokens(p)));
  if (o.pass)
    o.detail = std::to_string(summaries[0].size()) + " summaries reproduced, reference response parsed, 31->30 words, " +
               std::to_string(rec.prompts.size()) + " chunk prompts <= 500 tokens";
  return o;
}

Outcome rank_equivalence() {
  Outcome o;
  Rng rng(1006);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t dim = 2 + rng.index(64);
    const auto a = random_unit(rng, dim), b = random_unit(rng, dim);
    double sq = 0;
    for (std::size_t j = 0; j < dim; ++j) sq += (a[j] - b[j]) * (a[j] - b[j]);
    worst = std::max(worst, std::abs(sq - (2 - 2 * cosine(a, b))));
  }
  if (worst > kRankTol) o.fail("identity error " + std::to_string(worst));

  // Orderings by both measures coincide.
  for (int round = 0; round < 100; ++round) {
    const std::size_t dim = 2 + rng.index(32);
    const auto q = random_unit(rng, dim);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 10; ++i) pts.push_back(random_unit(rng, dim));
    std::vector<std::size_t> by_euclid(pts.size()), by_cos(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) by_euclid[i] = by_cos[i] = i;
    auto euclid = [&](std::size_t i) {
      double s = 0;
      for (std::size_t j = 0; j < dim; ++j) s += (q[j] - pts[i][j]) * (q[j] - pts[i][j]);
      return s;
    };
    std::sort(by_euclid.begin(), by_euclid.end(), [&](auto x, auto y) { return euclid(x) < euclid(y); });
    std::sort(by_cos.begin(), by_cos.end(), [&](auto x, auto y) { return cosine(q, pts[x]) > cosine(q, pts[y]); });
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (by_euclid[i] != by_cos[i] &&
          std::abs(euclid(by_euclid[i]) - euclid(by_cos[i])) > kRankTol)  // only exact ties may swap
        o.fail("orderings differ in round " + std::to_string(round));
  }
  if (o.pass) o.detail = "1000 pairs, max identity error " + std::to_string(worst);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"metric-oracle-equivalence", metrics_oracle},
      {"knn-oracle-equivalence", knn_oracle},
      {"context-collector-oracle", context_oracle},
      {"problem-group-oracle", problem_group_oracle},
      {"summary-gain-direction", table3_direction},
      {"custom-distance-not-worse", table2_direction},
      {"flag-precedence", flag_precedence},
      {"harvest-rules", harvest_rules},
      {"summarizer-offline-determinism", summarizer_offline},
      {"euclidean-cosine-rank-equivalence", rank_equivalence},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << o.detail << ")" << std::endl;
  }
  return failed;
}
