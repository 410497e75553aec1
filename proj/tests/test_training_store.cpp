#include <gtest/gtest.h>

#include "rtriage/error.hpp"
#include "rtriage/training_store.hpp"
#include "test_support.hpp"

using namespace rtriage;
using namespace rtriage::testing;

namespace {

HarvestInput input(const std::string& id, std::uint64_t seq, const std::string& label, double certainty,
                   bool flagged = false, std::string replay = "R1") {
  HarvestInput in;
  in.event = failed_event(id, "S1", seq, "select c" + std::to_string(seq) + " from t", "boom", 100, replay);
  in.prediction.event_id = id;
  in.prediction.label_id = label;
  in.prediction.certainty = certainty;
  in.prediction.flagged = flagged;
  if (flagged) in.prediction.flag_reason = certainty < 0.9 ? FlagReason::uncertain : FlagReason::problem_group;
  return in;
}

OperatorAction reclassify(const std::string& event, const std::string& label, const std::string& ts) {
  OperatorAction a;
  a.kind = ActionKind::reclassify;
  a.event_id = event;
  a.label_id = label;
  a.timestamp = ts;
  return a;
}

OperatorAction rating(const std::string& replay, int r, const std::string& ts) {
  OperatorAction a;
  a.kind = ActionKind::rate_replay;
  a.replay_id = replay;
  a.rating = r;
  a.timestamp = ts;
  return a;
}

}  // namespace

TEST(Harvest, CertainUnflaggedPrediction) {
  const auto out = harvest({input("e1", 1, "A", 0.95)}, {}, 0.9, 100);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].label.label_id, "A");
  EXPECT_EQ(out[0].label_source, LabelSource::predicted_certain);
  EXPECT_EQ(out[0].certainty_at_labeling, 0.95);
}

TEST(Harvest, FlaggedOrUncertainWithoutActionIsExcluded) {
  EXPECT_TRUE(harvest({input("e1", 1, "A", 1.0, true)}, {}, 0.9, 100).empty());
  EXPECT_TRUE(harvest({input("e1", 1, "A", 0.6)}, {}, 0.9, 100).empty());
}

TEST(Harvest, OperatorLabelAlwaysWins) {
  const auto out = harvest({input("e1", 1, "A", 1.0), input("e2", 2, "A", 0.2, true)},
                           {reclassify("e1", "B", "2026-10-01T10:00:00Z"), reclassify("e2", "C", "2026-10-01T10:00:00Z")},
                           0.9, 100);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].label.label_id, "B");
  EXPECT_EQ(out[0].label_source, LabelSource::operator_reclassified);
  EXPECT_EQ(out[1].label.label_id, "C");
}

TEST(Harvest, ConfirmKeepsPredictedLabel) {
  OperatorAction c;
  c.kind = ActionKind::confirm;
  c.event_id = "e1";
  c.timestamp = "2026-10-01T10:00:00Z";
  const auto out = harvest({input("e1", 1, "A", 0.4, true)}, {c}, 0.9, 100);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].label.label_id, "A");
  EXPECT_EQ(out[0].label_source, LabelSource::operator_reclassified);
}

TEST(Harvest, LatestActionWins) {
  const auto out = harvest({input("e1", 1, "A", 1.0)},
                           {reclassify("e1", "C", "2026-10-02T10:00:00Z"), reclassify("e1", "B", "2026-10-01T10:00:00Z")},
                           0.9, 100);
  EXPECT_EQ(out.at(0).label.label_id, "C");
}

TEST(Harvest, UnknownEventInActionIsNotFound) {
  EXPECT_THROW(harvest({input("e1", 1, "A", 1.0)}, {reclassify("zz", "B", "2026-10-01T10:00:00Z")}, 0.9, 100),
               NotFoundError);
}

TEST(Harvest, CapsEachLabelPerReplay) {
  std::vector<HarvestInput> in;
  for (int i = 0; i < 150; ++i) in.push_back(input("e" + std::to_string(i), 150 - i, "A", 1.0));
  for (int i = 0; i < 20; ++i) in.push_back(input("o" + std::to_string(i), 1000 + i, "B", 1.0));
  for (int i = 0; i < 120; ++i) in.push_back(input("r" + std::to_string(i), 5000 + i, "A", 1.0, false, "R2"));
  const auto out = harvest(in, {}, 0.9, 100);
  std::map<std::pair<std::string, std::string>, int> counts;
  std::uint64_t max_seq_r1 = 0;
  for (const auto& le : out) {
    ++counts[{le.event.replay_id, le.label.label_id}];
    if (le.event.replay_id == "R1" && le.label.label_id == "A") max_seq_r1 = std::max(max_seq_r1, le.event.seq_no);
  }
  EXPECT_EQ((counts[{"R1", "A"}]), 100);
  EXPECT_EQ((counts[{"R1", "B"}]), 20);
  EXPECT_EQ((counts[{"R2", "A"}]), 100);
  EXPECT_EQ(max_seq_r1, 100u);  // the earliest ones are kept
}

TEST(Harvest, RandomStreamsSatisfyCapAndDedup) {
  Rng rng(51);
  for (int round = 0; round < 100; ++round) {
    std::vector<HarvestInput> in;
    std::vector<OperatorAction> actions;
    const std::size_t n = rng.index(300);
    const int cap = 1 + static_cast<int>(rng.index(30));
    for (std::size_t i = 0; i < n; ++i) {
      auto h = input("e" + std::to_string(i), i, "L" + std::to_string(rng.index(3)), rng.uniform(), rng.index(4) == 0,
                     "R" + std::to_string(rng.index(2)));
      // Repeat statements so dedup has work to do.
      h.event.statement_string = "select " + std::to_string(rng.index(20));
      h.event.statement_hash = hash_statement(h.event.statement_string);
      in.push_back(h);
      if (rng.index(5) == 0) actions.push_back(reclassify(h.event.event_id, "L" + std::to_string(rng.index(3)),
                                                          "2026-10-0" + std::to_string(1 + rng.index(5)) + "T00:00:00Z"));
    }
    const auto out = harvest(in, actions, 0.9, cap);
    std::map<std::pair<std::string, std::string>, int> counts;
    std::set<std::string> keys;
    for (const auto& le : out) {
      EXPECT_LE((++counts[{le.event.replay_id, le.label.label_id}]), cap);
      EXPECT_TRUE(keys.insert(dedup_key(le)).second);
    }
    EXPECT_EQ(dedup(out).size(), out.size());
  }
}

TEST(Dedup, Rules) {
  const auto e = failed_event("e1", "S1", 1, "select 1", "boom");
  auto e2 = e;
  e2.event_id = "e2";
  EXPECT_EQ(dedup({labeled(e, "A"), labeled(e2, "A")}).size(), 1u);
  EXPECT_EQ(dedup({labeled(e, "A"), labeled(e2, "B")}).size(), 2u);
  const auto once = dedup({labeled(e, "A"), labeled(e2, "A"), labeled(e, "B")});
  EXPECT_EQ(dedup(once), once);
}

TEST(Assemble, FromEmptyAndReclassification) {
  const auto a = labeled(failed_event("e1", "S1", 1, "select 1", "boom"), "A");
  const auto b = labeled(failed_event("e2", "S1", 2, "select 2", "boom"), "B");
  auto dup = a;
  dup.event.event_id = "e9";
  const TrainingDataset v1 = assemble({}, {a, b, dup}, {}, "seed");
  EXPECT_EQ(v1.version, 1);
  EXPECT_EQ(v1.items.size(), 2u);
  EXPECT_EQ(v1.provenance.size(), v1.items.size());

  const TrainingDataset v2 = assemble(v1, {}, {reclassify("e1", "C", "2026-10-01T00:00:00Z")}, "harvest:R1");
  EXPECT_EQ(v2.version, 2);
  ASSERT_EQ(v2.items.size(), 2u);
  int copies = 0;
  for (const auto& it : v2.items)
    if (it.event.event_id == "e1") {
      ++copies;
      EXPECT_EQ(it.label.label_id, "C");
    }
  EXPECT_EQ(copies, 1);
  EXPECT_EQ(assemble(v1, {}, {reclassify("e1", "C", "2026-10-01T00:00:00Z")}, "harvest:R1"), v2);
}

TEST(WeeklyRatings, SupersedeAndMean) {
  const auto report = weekly_rating_report({rating("R1", 2, "2026-10-12T09:00:00Z"), rating("R1", 4, "2026-10-13T09:00:00Z"),
                                            rating("R2", 1, "2026-10-20T09:00:00Z"), rating("R3", 1, "2026-10-21T09:00:00Z"),
                                            rating("R4", 3, "2026-10-22T09:00:00Z")});
  ASSERT_EQ(report.size(), 2u);
  EXPECT_EQ(report[0].week, "2026-W42");
  EXPECT_EQ(report[0].average, 4.0);
  EXPECT_EQ(report[0].replays, 1u);
  EXPECT_EQ(report[1].week, "2026-W43");
  EXPECT_DOUBLE_EQ(report[1].average, 5.0 / 3.0);
  EXPECT_TRUE(weekly_rating_report({}).empty());
}

TEST(WeeklyRatings, IsoWeeks) {
  EXPECT_EQ(iso_week("2026-01-01T00:00:00Z"), "2026-W01");
  EXPECT_EQ(iso_week("2027-01-01T00:00:00Z"), "2026-W53");
  EXPECT_EQ(iso_week("2024-12-30T00:00:00Z"), "2025-W01");
  EXPECT_THROW(iso_week("2026-13-40"), ValidationError);
}

TEST(Actions, Validation) {
  EXPECT_THROW(validate_action(rating("R1", 5, "2026-10-01T00:00:00Z")), ValidationError);
  EXPECT_THROW(validate_action(rating("", 2, "2026-10-01T00:00:00Z")), ValidationError);
  EXPECT_THROW(validate_action(reclassify("e1", "", "2026-10-01T00:00:00Z")), ValidationError);
  EXPECT_NO_THROW(validate_action(rating("R1", 4, "2026-10-01T00:00:00Z")));
}

TEST(Store, JournalReplayReproducesState) {
  TempDir dir;
  auto journal = std::make_shared<Journal>(dir / "journal.jsonl");
  std::string before;
  {
    TrainingStore store(journal);
    store.seed(separable_dataset(2, 5));
    store.record_action(reclassify("E0_1", "class_b", "2026-10-01T00:00:00Z"));
    store.record_action(rating("R1", 2, "2026-10-01T00:00:00Z"));
    store.assemble_new({labeled(failed_event("new", "S9", 9, "select 9", "x"), "class_a")}, "harvest:R1");
    EXPECT_EQ(store.versions().size(), 2u);
    before = store.state_json();
  }
  TrainingStore replayed(std::make_shared<Journal>(dir / "journal.jsonl"));
  EXPECT_EQ(replayed.state_json(), before);
  EXPECT_EQ(replayed.current().version, 2);
  for (const auto& v : replayed.versions()) EXPECT_EQ(v.provenance.size(), v.items.size());
}

TEST(Store, InvalidActionIsNotJournaled) {
  TempDir dir;
  auto journal = std::make_shared<Journal>(dir / "journal.jsonl");
  TrainingStore store(journal);
  EXPECT_THROW(store.record_action(rating("R1", 0, "2026-10-01T00:00:00Z")), ValidationError);
  EXPECT_TRUE(journal->read_all().empty());
}
