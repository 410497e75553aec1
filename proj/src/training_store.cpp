#include "rtriage/training_store.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>

#include "rtriage/error.hpp"

namespace rtriage {

std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::reclassify: return "reclassify";
    case ActionKind::confirm: return "confirm";
    case ActionKind::rate_replay: return "rate_replay";
  }
  return "confirm";
}

ActionKind parse_action_kind(std::string_view s) {
  if (s == "reclassify") return ActionKind::reclassify;
  if (s == "confirm") return ActionKind::confirm;
  if (s == "rate_replay") return ActionKind::rate_replay;
  throw ValidationError("unknown action '" + std::string(s) + "'");
}

void validate_action(const OperatorAction& a) {
  if (a.kind == ActionKind::rate_replay) {
    if (a.replay_id.empty()) throw ValidationError("rating without replay_id");
    if (a.rating < 1 || a.rating > 4)
      throw ValidationError("rating must be in 1..4, got " + std::to_string(a.rating));
  } else {
    if (a.event_id.empty()) throw ValidationError(std::string(to_string(a.kind)) + " without event_id");
    if (a.kind == ActionKind::reclassify && a.label_id.empty()) throw ValidationError("reclassify without label_id");
  }
  if (!a.timestamp.empty()) iso_week(a.timestamp);
}

std::map<std::string, OperatorAction> latest_label_actions(const std::vector<OperatorAction>& actions) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < actions.size(); ++i)
    if (actions[i].kind != ActionKind::rate_replay) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return actions[a].timestamp < actions[b].timestamp; });
  std::map<std::string, OperatorAction> out;
  for (std::size_t i : order) out[actions[i].event_id] = actions[i];
  return out;
}

std::string dedup_key(const LabeledEvent& e) {
  std::string k = hash_to_hex(e.event.statement_hash);
  k += '|';
  k += e.event.error_code ? std::to_string(*e.event.error_code) : "-";
  k += '|';
  k += e.label.label_id;
  k += '|';
  k += e.summary_text ? hash_to_hex(fnv1a64(*e.summary_text)) : "-";
  return k;
}

std::vector<LabeledEvent> dedup(const std::vector<LabeledEvent>& items) {
  std::set<std::string> seen;
  std::vector<LabeledEvent> out;
  for (const auto& it : items)
    if (seen.insert(dedup_key(it)).second) out.push_back(it);
  return out;
}

std::vector<LabeledEvent> harvest(const std::vector<HarvestInput>& inputs, const std::vector<OperatorAction>& actions,
                                  double theta, int cap) {
  if (cap < 1) throw PreconditionError("harvest: cap must be positive");
  std::set<std::string> known;
  for (const auto& in : inputs) known.insert(in.event.event_id);
  const auto latest = latest_label_actions(actions);
  for (const auto& [event_id, a] : latest)
    if (!known.count(event_id)) throw NotFoundError("operator action references unknown event '" + event_id + "'");

  std::vector<const HarvestInput*> order;
  for (const auto& in : inputs) order.push_back(&in);
  std::stable_sort(order.begin(), order.end(), [](const HarvestInput* a, const HarvestInput* b) {
    if (a->event.replay_id != b->event.replay_id) return a->event.replay_id < b->event.replay_id;
    return a->event.seq_no < b->event.seq_no;
  });

  std::vector<LabeledEvent> picked;
  for (const HarvestInput* in : order) {
    LabeledEvent le;
    le.event = in->event;
    le.summary_text = in->summary_text;
    if (auto a = latest.find(in->event.event_id); a != latest.end()) {
      const std::string& label = a->second.kind == ActionKind::reclassify ? a->second.label_id : in->prediction.label_id;
      le.label = {label, label};
      le.label_source = LabelSource::operator_reclassified;
      le.certainty_at_labeling = 1.0;
    } else if (!in->prediction.flagged && in->prediction.certainty >= theta) {
      le.label = {in->prediction.label_id, in->prediction.label_id};
      le.label_source = LabelSource::predicted_certain;
      le.certainty_at_labeling = in->prediction.certainty;
    } else {
      continue;
    }
    picked.push_back(std::move(le));
  }

  std::map<std::pair<std::string, std::string>, int> per_class;
  std::vector<LabeledEvent> out;
  for (auto& le : dedup(picked))
    if (++per_class[{le.event.replay_id, le.label.label_id}] <= cap) out.push_back(std::move(le));
  return out;
}

TrainingDataset assemble(const TrainingDataset& base, const std::vector<LabeledEvent>& new_items,
                         const std::vector<OperatorAction>& actions, const std::string& source) {
  TrainingDataset next;
  next.version = base.version + 1;
  next.items = base.items;
  next.provenance = base.provenance;
  next.provenance.resize(next.items.size());

  std::map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < next.items.size(); ++i) where[next.items[i].event.event_id] = i;
  for (const auto& le : new_items) {
    ProvenanceEntry p{le.event.event_id, source, next.version};
    if (auto it = where.find(le.event.event_id); it != where.end()) {
      next.items[it->second] = le;
      next.provenance[it->second] = p;
    } else {
      where[le.event.event_id] = next.items.size();
      next.items.push_back(le);
      next.provenance.push_back(p);
    }
  }
  for (const auto& [event_id, a] : latest_label_actions(actions)) {
    if (a.kind != ActionKind::reclassify) continue;
    auto it = where.find(event_id);
    if (it == where.end()) continue;
    auto& item = next.items[it->second];
    if (item.label.label_id == a.label_id && item.label_source == LabelSource::operator_reclassified) continue;
    item.label = {a.label_id, a.label_id};
    item.label_source = LabelSource::operator_reclassified;
    item.certainty_at_labeling = 1.0;
    next.provenance[it->second] = {event_id, "reclassify:" + a.operator_id, next.version};
  }

  std::set<std::string> seen;
  TrainingDataset out;
  out.version = next.version;
  for (std::size_t i = 0; i < next.items.size(); ++i) {
    if (!seen.insert(dedup_key(next.items[i])).second) continue;
    out.items.push_back(std::move(next.items[i]));
    out.provenance.push_back(std::move(next.provenance[i]));
  }
  return out;
}

std::string iso_week(std::string_view ts) {
  int y = 0;
  unsigned m = 0, d = 0;
  if (ts.size() < 10 || std::sscanf(std::string(ts.substr(0, 10)).c_str(), "%4d-%2u-%2u", &y, &m, &d) != 3)
    throw ValidationError("malformed timestamp '" + std::string(ts) + "'");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) throw ValidationError("invalid date in timestamp '" + std::string(ts) + "'");
  const sys_days date{ymd};
  const unsigned iso_wd = weekday{date}.iso_encoding();  // Monday = 1
  const sys_days thursday = date + days{4 - static_cast<int>(iso_wd)};
  const year_month_day thu{thursday};
  const sys_days jan1{thu.year() / January / 1};
  const int week = static_cast<int>((thursday - jan1).count() / 7) + 1;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-W%02d", static_cast<int>(thu.year()), week);
  return buf;
}

std::vector<WeeklyRating> weekly_rating_report(const std::vector<OperatorAction>& actions) {
  std::map<std::string, std::map<std::string, int>> severest;  // week -> replay -> rating
  for (const auto& a : actions) {
    if (a.kind != ActionKind::rate_replay) continue;
    int& r = severest[iso_week(a.timestamp)][a.replay_id];
    r = std::max(r, a.rating);
  }
  std::vector<WeeklyRating> out;
  for (const auto& [week, replays] : severest) {
    double sum = 0;
    for (const auto& [replay, rating] : replays) sum += rating;
    out.push_back({week, sum / static_cast<double>(replays.size()), replays.size()});
  }
  return out;
}

Journal::Journal(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void Journal::append(const nlohmann::json& entry) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot append to journal " + path_.string());
  out << entry.dump() << '\n';
  out.flush();
  if (!out) throw Error("journal write failed: " + path_.string());
}

std::vector<nlohmann::json> Journal::read_all() const {
  std::lock_guard lock(mu_);
  std::vector<nlohmann::json> out;
  std::ifstream in(path_, std::ios::binary);
  if (!in) return out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("op")) throw ParseError(lineno, "corrupt journal entry in " + path_.string());
    out.push_back(std::move(j));
  }
  return out;
}

TrainingStore::TrainingStore(std::shared_ptr<Journal> journal) : journal_(std::move(journal)) {
  if (journal_)
    for (const auto& e : journal_->read_all()) apply_locked(e);
}

void TrainingStore::write(const nlohmann::json& entry) {
  if (journal_) journal_->append(entry);
  apply_locked(entry);
}

void TrainingStore::seed(const std::vector<LabeledEvent>& items, const std::string& source) {
  std::lock_guard lock(mu_);
  write({{"op", "dataset"}, {"source", source}, {"items", items}});
}

void TrainingStore::record_action(const OperatorAction& action) {
  validate_action(action);
  std::lock_guard lock(mu_);
  write({{"op", "action"}, {"action", action}});
}

TrainingDataset TrainingStore::assemble_new(const std::vector<LabeledEvent>& new_items, const std::string& source) {
  std::lock_guard lock(mu_);
  write({{"op", "dataset"}, {"source", source}, {"items", new_items}});
  return versions_.back();
}

void TrainingStore::apply(const nlohmann::json& entry) {
  std::lock_guard lock(mu_);
  apply_locked(entry);
}

void TrainingStore::apply_locked(const nlohmann::json& entry) {
  const std::string op = entry.at("op").get<std::string>();
  if (op == "action") {
    actions_.push_back(entry.at("action").get<OperatorAction>());
  } else if (op == "dataset") {
    const TrainingDataset base = versions_.empty() ? TrainingDataset{} : versions_.back();
    versions_.push_back(assemble(base, entry.at("items").get<std::vector<LabeledEvent>>(), actions_,
                                 entry.at("source").get<std::string>()));
  }
}

TrainingDataset TrainingStore::current() const {
  std::lock_guard lock(mu_);
  return versions_.empty() ? TrainingDataset{} : versions_.back();
}

std::vector<TrainingDataset> TrainingStore::versions() const {
  std::lock_guard lock(mu_);
  return versions_;
}

std::vector<OperatorAction> TrainingStore::actions() const {
  std::lock_guard lock(mu_);
  return actions_;
}

std::string TrainingStore::state_json() const {
  std::lock_guard lock(mu_);
  return nlohmann::json{{"versions", versions_}, {"actions", actions_}}.dump();
}

void to_json(nlohmann::json& j, const OperatorAction& a) {
  j = nlohmann::json{{"action", std::string(to_string(a.kind))},
                     {"operator_id", a.operator_id},
                     {"timestamp", a.timestamp}};
  if (a.kind == ActionKind::rate_replay) {
    j["replay_id"] = a.replay_id;
    j["rating"] = a.rating;
  } else {
    j["event_id"] = a.event_id;
    if (a.kind == ActionKind::reclassify) j["label_id"] = a.label_id;
  }
}

void from_json(const nlohmann::json& j, OperatorAction& a) {
  a = OperatorAction{};
  a.kind = parse_action_kind(j.at("action").get<std::string>());
  a.event_id = j.value("event_id", std::string());
  a.label_id = j.value("label_id", std::string());
  a.replay_id = j.value("replay_id", std::string());
  a.rating = j.value("rating", 0);
  a.operator_id = j.value("operator_id", std::string());
  a.timestamp = j.value("timestamp", std::string());
}

void to_json(nlohmann::json& j, const TrainingDataset& d) {
  j = nlohmann::json{{"version", d.version}, {"items", d.items}};
  auto& p = j["provenance"] = nlohmann::json::array();
  for (const auto& e : d.provenance)
    p.push_back({{"event_id", e.event_id}, {"source", e.source}, {"version_added", e.version_added}});
}

void from_json(const nlohmann::json& j, TrainingDataset& d) {
  d = TrainingDataset{};
  d.version = j.at("version").get<int>();
  d.items = j.at("items").get<std::vector<LabeledEvent>>();
  for (const auto& e : j.at("provenance"))
    d.provenance.push_back(
        {e.at("event_id").get<std::string>(), e.at("source").get<std::string>(), e.at("version_added").get<int>()});
}

void to_json(nlohmann::json& j, const WeeklyRating& w) {
  j = {{"week", w.week}, {"average", w.average}, {"replays", w.replays}};
}

}  // namespace rtriage
