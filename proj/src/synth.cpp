#include "rtriage/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <set>

#include "rtriage/error.hpp"
#include "rtriage/random.hpp"

namespace rtriage {

namespace {

constexpr const char* kObjectWords[] = {
    "orders",   "customers", "lineitem", "supplier", "nation",   "region",   "partsupp",
    "invoices", "payments",  "ledger",   "accounts", "shipments", "returns",  "products",
    "pricing",  "inventory", "vendors",  "contracts", "budgets",  "payroll",  "employees",
    "assets",   "tickets",   "sessions", "audits",   "metrics",  "forecasts", "catalogs",
    "receipts", "journals",  "balances", "campaigns", "leads",    "quotes",   "rebates",
    "tariffs",  "routes",    "fleets",   "claims",   "policies"};
constexpr std::size_t kObjectWordCount = std::size(kObjectWords);

constexpr const char* kFillerTemplates[] = {
    "SELECT * FROM {obj} WHERE id = ?", "UPDATE {obj} SET status = ? WHERE id = ?",
    "SELECT COUNT(*) FROM {obj}", "INSERT INTO {obj} VALUES (?, ?)"};

std::string upper_word(std::string_view s, std::size_t& pos) {
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  std::string w;
  while (pos < s.size() && std::isalpha(static_cast<unsigned char>(s[pos])))
    w.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(s[pos++]))));
  return w;
}

// (sql_type, sql_sub_type) derived from the leading keyword(s).
std::pair<std::string, std::string> classify_statement(std::string_view stmt) {
  std::size_t pos = 0;
  const std::string kw = upper_word(stmt, pos);
  if (kw == "SELECT") return {"QUERY", "SELECT"};
  if (kw == "INSERT" || kw == "UPDATE" || kw == "DELETE" || kw == "UPSERT") return {"DML", kw};
  if (kw == "CREATE" || kw == "DROP" || kw == "ALTER") return {"DDL", kw + " " + upper_word(stmt, pos)};
  if (kw == "CALL") return {"PROCEDURE", "CALL"};
  return {"OTHER", kw};
}

struct Draw {
  std::size_t error_template, statement_template, object, error_code, request_name;
};

Draw draw_for(const RootCauseSpec& spec, int object_pool, Rng& rng) {
  Draw d{};
  d.error_template = rng.index(spec.error_templates.size());
  d.statement_template = rng.index(spec.statement_templates.size());
  d.object = rng.index(static_cast<std::size_t>(object_pool));
  d.error_code = rng.index(spec.error_codes.size());
  d.request_name = rng.index(spec.request_names.size());
  return d;
}

struct PendingEvent {
  std::string statement;
  EventStatus status;
  std::optional<std::int64_t> error_code;
  std::optional<std::string> error_message;
  std::optional<std::string> skip_reason;
  std::string request_name;
  std::string label;  // empty for unlabeled (succeeded) events
};

std::vector<int> apportion(const std::vector<RootCauseSpec>& specs, int total) {
  double wsum = 0;
  for (const auto& s : specs) wsum += s.weight;
  std::vector<int> counts(specs.size());
  std::vector<std::pair<double, std::size_t>> rema;
  int assigned = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const double exact = total * specs[i].weight / wsum;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    rema.emplace_back(exact - counts[i], i);
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[rema[r % rema.size()].second];
  return counts;
}

}  // namespace

std::string object_name(int index) {
  const auto i = static_cast<std::size_t>(index);
  std::string name = kObjectWords[i % kObjectWordCount];
  for (std::size_t round = i / kObjectWordCount; round > 0; round /= 26)
    name.push_back(static_cast<char>('a' + (round - 1) % 26));
  return name;
}

std::string instantiate(std::string_view tmpl, std::string_view object) {
  std::string out;
  constexpr std::string_view kSlot = "{obj}";
  std::size_t pos = 0;
  while (true) {
    const std::size_t hit = tmpl.find(kSlot, pos);
    out.append(tmpl.substr(pos, hit == std::string_view::npos ? std::string_view::npos : hit - pos));
    if (hit == std::string_view::npos) break;
    out.append(object);
    pos = hit + kSlot.size();
  }
  return out;
}

void validate_scenario(const SynthScenario& s) {
  std::vector<std::string> v;
  if (s.replay_id.empty()) v.emplace_back("replay_id is empty");
  if (s.num_sessions < 1) v.emplace_back("num_sessions must be positive");
  if (s.failed_events < 0) v.emplace_back("failed_events must be non-negative");
  if (s.max_filler < 0) v.emplace_back("max_filler must be non-negative");
  if (s.object_pool < 1) v.emplace_back("object_pool must be positive");
  if (s.root_causes.empty()) v.emplace_back("no root causes");
  std::set<std::string> labels;
  double wsum = 0;
  for (const auto& rc : s.root_causes) {
    if (!labels.insert(rc.label_id).second) v.push_back("duplicate label " + rc.label_id);
    if (rc.weight < 0) v.push_back(rc.label_id + ": negative weight");
    wsum += rc.weight;
    if (rc.error_templates.empty() || rc.statement_templates.empty() || rc.error_codes.empty() ||
        rc.request_names.empty())
      v.push_back(rc.label_id + ": empty template or code pool");
    if (rc.context_dependent && rc.context_signature.empty())
      v.push_back(rc.label_id + ": context_dependent without signature");
    if (!rc.context_dependent && !rc.context_signature.empty())
      v.push_back(rc.label_id + ": signature on a context-free root cause");
  }
  if (!s.root_causes.empty() && wsum <= 0) v.emplace_back("weights sum to zero");
  for (const auto& rc : s.root_causes)
    for (const auto& step : rc.context_signature)
      if (step.status == EventStatus::failed && !labels.count(step.label_id))
        v.push_back(rc.label_id + ": failed signature step needs a known label_id");
      else if (step.status == EventStatus::succeeded)
        v.push_back(rc.label_id + ": signature steps must be failed or skipped");

  std::map<int, std::vector<const RootCauseSpec*>> blocks;
  for (const auto& rc : s.root_causes)
    if (rc.overlap_block >= 0) blocks[rc.overlap_block].push_back(&rc);
  for (const auto& [id, members] : blocks) {
    const std::string tag = "overlap block " + std::to_string(id);
    if (members.size() < 2) v.push_back(tag + " needs at least two root causes");
    for (const RootCauseSpec* m : members) {
      if (!m->context_dependent) v.push_back(tag + ": " + m->label_id + " is not context dependent");
      const RootCauseSpec* f = members.front();
      if (m->error_templates != f->error_templates || m->statement_templates != f->statement_templates ||
          m->error_codes != f->error_codes || m->request_names != f->request_names)
        v.push_back(tag + ": " + m->label_id + " pools differ from " + f->label_id);
    }
    std::set<std::string> sigs;
    for (const RootCauseSpec* m : members) {
      std::string key;
      for (const auto& st : m->context_signature)
        key += st.statement_template + '|' + std::string(to_string(st.status)) + '|' + st.message_template + ';';
      if (!sigs.insert(key).second) v.push_back(tag + ": " + m->label_id + " repeats a signature");
    }
  }
  if (v.empty()) return;
  std::string msg = "invalid scenario:";
  for (const auto& p : v) msg += " " + p + ";";
  throw ValidationError(msg);
}

SynthResult generate(const SynthScenario& sc) {
  validate_scenario(sc);
  Rng rng(sc.seed);
  const auto& specs = sc.root_causes;

  const std::vector<int> counts = apportion(specs, sc.failed_events);
  std::vector<std::size_t> episodes;
  for (std::size_t i = 0; i < specs.size(); ++i) episodes.insert(episodes.end(), counts[i], i);
  rng.shuffle(episodes);

  // The n-th failure of every member of an overlap block reuses the text of
  // draw n; categorical codes are drawn independently from the shared pools.
  std::map<int, Rng> block_rng;
  std::map<int, std::vector<Draw>> block_draws;
  std::vector<std::size_t> block_counter(specs.size(), 0);

  std::vector<std::deque<PendingEvent>> sessions(static_cast<std::size_t>(sc.num_sessions));
  for (std::size_t spec_idx : episodes) {
    const RootCauseSpec& spec = specs[spec_idx];
    Draw d;
    if (spec.overlap_block >= 0) {
      auto it = block_rng.try_emplace(spec.overlap_block, mix64(sc.seed ^ (0xb10cULL + spec.overlap_block))).first;
      auto& draws = block_draws[spec.overlap_block];
      const std::size_t n = block_counter[spec_idx]++;
      while (draws.size() <= n) draws.push_back(draw_for(spec, sc.object_pool, it->second));
      d = draws[n];
      d.error_code = rng.index(spec.error_codes.size());
      d.request_name = rng.index(spec.request_names.size());
    } else {
      d = draw_for(spec, sc.object_pool, rng);
    }
    const std::string obj = object_name(static_cast<int>(d.object));
    auto& queue = sessions[rng.index(sessions.size())];

    for (const auto& step : spec.context_signature) {
      PendingEvent pe;
      pe.statement = instantiate(step.statement_template, obj);
      pe.status = step.status;
      pe.request_name = "ExecuteStatement";
      if (step.status == EventStatus::failed) {
        pe.error_code = step.error_code;
        pe.error_message = instantiate(step.message_template, obj);
        pe.label = step.label_id;
      } else {
        pe.skip_reason = instantiate(step.message_template, obj);
      }
      queue.push_back(std::move(pe));
    }
    const std::size_t filler = rng.index(static_cast<std::size_t>(sc.max_filler) + 1);
    for (std::size_t f = 0; f < filler; ++f) {
      PendingEvent pe;
      pe.statement = instantiate(kFillerTemplates[rng.index(std::size(kFillerTemplates))],
                                 object_name(static_cast<int>(rng.index(static_cast<std::size_t>(sc.object_pool)))));
      pe.status = EventStatus::succeeded;
      pe.request_name = "ExecuteStatement";
      queue.push_back(std::move(pe));
    }
    PendingEvent fail;
    fail.statement = instantiate(spec.statement_templates[d.statement_template], obj);
    fail.status = EventStatus::failed;
    fail.error_code = spec.error_codes[d.error_code];
    fail.error_message = instantiate(spec.error_templates[d.error_template], obj);
    fail.request_name = spec.request_names[d.request_name];
    fail.label = spec.label_id;
    queue.push_back(std::move(fail));
  }

  SynthResult out;
  out.log.replay_id = sc.replay_id;
  out.log.capture_id = sc.capture_id;
  out.log.source = "synthetic";
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < sessions.size(); ++i)
    if (!sessions[i].empty()) active.push_back(i);
  std::uint64_t seq = 0;
  char buf[32];
  while (!active.empty()) {
    const std::size_t slot = rng.index(active.size());
    const std::size_t sid = active[slot];
    PendingEvent pe = std::move(sessions[sid].front());
    sessions[sid].pop_front();
    if (sessions[sid].empty()) {
      active[slot] = active.back();
      active.pop_back();
    }
    ++seq;
    std::snprintf(buf, sizeof buf, "-e%07llu", static_cast<unsigned long long>(seq));
    std::string event_id = sc.replay_id + buf;
    std::snprintf(buf, sizeof buf, "S%05zu", sid + 1);
    ReplayEvent e = make_event(event_id, sc.replay_id, buf, seq, pe.statement, pe.status);
    e.capture_id = sc.capture_id;
    std::tie(e.sql_type, e.sql_sub_type) = classify_statement(pe.statement);
    e.request_name = pe.request_name;
    e.error_code = pe.error_code;
    e.error_message = pe.error_message;
    e.skip_reason = pe.skip_reason;
    if (!pe.label.empty()) out.truth.emplace(e.event_id, pe.label);
    out.log.events.push_back(std::move(e));
  }
  return out;
}

namespace {

RootCauseSpec plain(std::string id, std::string error, std::vector<std::string> stmts,
                    std::vector<std::int64_t> codes, std::vector<std::string> requests) {
  RootCauseSpec rc;
  rc.label_id = id;
  rc.display_name = std::move(id);
  rc.error_templates = {std::move(error)};
  rc.statement_templates = std::move(stmts);
  rc.error_codes = std::move(codes);
  rc.request_names = std::move(requests);
  return rc;
}

std::vector<RootCauseSpec> distinguishable_pool() {
  const std::vector<std::string> exec{"ExecuteStatement", "ExecutePrepared"};
  const std::vector<std::string> fetch{"FetchResult", "ExecutePrepared"};
  std::vector<RootCauseSpec> v;
  v.push_back(plain("connection_error", "connection error: socket closed by peer while reading {obj}",
                    {"SELECT * FROM {obj} WHERE id = ?", "SELECT name FROM {obj}"}, {-10709, -10807}, fetch));
  v.push_back(plain("transaction_rollback",
                    "transaction rolled back by an internal error: lock wait timeout on {obj}",
                    {"UPDATE {obj} SET amount = ? WHERE id = ?", "DELETE FROM {obj} WHERE id = ?"}, {131, 133}, exec));
  v.push_back(plain("insufficient_privilege", "insufficient privilege: not authorized to read {obj}",
                    {"SELECT * FROM {obj}", "SELECT id FROM {obj} WHERE region = ?"}, {258}, exec));
  v.push_back(plain("unique_constraint", "unique constraint violated: duplicate key in {obj}",
                    {"INSERT INTO {obj} VALUES (?, ?)", "UPSERT {obj} VALUES (?, ?)"}, {301}, exec));
  v.push_back(plain("out_of_memory", "out of memory: allocation failed while materializing {obj}",
                    {"SELECT * FROM {obj} ORDER BY created", "SELECT region, SUM(amount) FROM {obj} GROUP BY region"},
                    {4, 1000}, {"ExecuteStatement"}));
  v.push_back(plain("feature_not_supported", "feature not supported: sql syntax error near window clause",
                    {"SELECT RANK() OVER (PARTITION BY region) FROM {obj}"}, {7, 257}, {"PrepareStatement"}));
  v.push_back(plain("datatype_conversion", "invalid datatype conversion for column amount of {obj}",
                    {"INSERT INTO {obj} (amount) VALUES (?)", "UPDATE {obj} SET amount = ?"}, {339}, exec));
  v.push_back(plain("result_mismatch", "result set differs from capture: row order changed for {obj}",
                    {"SELECT * FROM {obj} LIMIT 100"}, {-303}, fetch));
  v.push_back(plain("privacy_scrubbing", "invalid literal value: scrubbed parameter rejected by {obj}",
                    {"SELECT * FROM {obj} WHERE email = ?", "UPDATE {obj} SET phone = ? WHERE id = ?"}, {111}, exec));
  v.push_back(plain("plan_cache_eviction", "statement invalidated: plan cache entry evicted for {obj}",
                    {"SELECT * FROM {obj} WHERE id IN (?, ?)"}, {100}, {"ExecutePrepared"}));
  v.push_back(plain("timeout_cancelled", "execution aborted: statement cancelled after query timeout on {obj}",
                    {"SELECT COUNT(*) FROM {obj} a JOIN {obj} b ON a.id = b.ref"}, {139}, {"ExecuteStatement"}));
  v.push_back(plain("disk_full", "disk full: cannot write savepoint for {obj}",
                    {"INSERT INTO {obj} SELECT * FROM staging"}, {2950}, exec));
  return v;
}

std::vector<RootCauseSpec> overlap_pool() {
  // Identical pools; only the preceding session events differ.
  const std::vector<std::string> errors{"cannot find table/view {obj} in schema"};
  const std::vector<std::string> stmts{"SELECT * FROM {obj}", "SELECT id, amount FROM {obj} WHERE id = ?",
                                       "INSERT INTO {obj} VALUES (?)"};
  const std::vector<std::int64_t> codes{259};
  const std::vector<std::string> requests{"ExecuteStatement", "ExecutePrepared"};
  auto member = [&](std::string id, std::vector<SignatureStep> sig) {
    RootCauseSpec rc;
    rc.label_id = id;
    rc.display_name = std::move(id);
    rc.error_templates = errors;
    rc.statement_templates = stmts;
    rc.error_codes = codes;
    rc.request_names = requests;
    rc.context_dependent = true;
    rc.context_signature = std::move(sig);
    rc.overlap_block = 0;
    return rc;
  };
  std::vector<RootCauseSpec> v;
  v.push_back(member("skipped_ddl_dependency",
                     {{"CREATE TABLE {obj} (id INT, amount DECIMAL)", EventStatus::skipped,
                       "skipped by workload preprocessing: unsupported ddl", 0, ""}}));
  v.push_back(member("ddl_privilege_dependency",
                     {{"CREATE TABLE {obj} (id INT, amount DECIMAL)", EventStatus::failed,
                       "insufficient privilege: not authorized to create {obj}", 258, "insufficient_privilege"}}));
  v.push_back(member("procedure_rollback_dependency",
                     {{"CALL populate_proc({obj})", EventStatus::failed,
                       "transaction rolled back due to exception in procedure populate_proc", 131,
                       "transaction_rollback"}}));
  v.push_back(member("view_connection_dependency",
                     {{"CREATE VIEW {obj} AS SELECT * FROM base", EventStatus::failed,
                       "connection error: socket closed by peer", -10709, "connection_error"}}));
  return v;
}

}  // namespace

SynthScenario plain_scenario(std::uint64_t seed, int classes, int failed_events) {
  auto pool = distinguishable_pool();
  if (classes < 1 || static_cast<std::size_t>(classes) > pool.size())
    throw ValidationError("plain_scenario supports 1.." + std::to_string(pool.size()) + " classes");
  SynthScenario s;
  s.seed = seed;
  s.failed_events = failed_events;
  s.num_sessions = std::max(1, failed_events / 3);
  s.root_causes.assign(pool.begin(), pool.begin() + classes);
  return s;
}

SynthScenario overlap_scenario(std::uint64_t seed, int overlap_classes, int failed_events) {
  auto overlap = overlap_pool();
  if (overlap_classes < 2 || static_cast<std::size_t>(overlap_classes) > overlap.size())
    throw ValidationError("overlap_scenario supports 2.." + std::to_string(overlap.size()) + " overlap classes");
  auto pool = distinguishable_pool();
  SynthScenario s;
  s.seed = seed;
  s.failed_events = failed_events;
  s.num_sessions = std::max(1, failed_events / 3);
  const std::size_t plain_count = 12 - static_cast<std::size_t>(overlap_classes);
  // Labels referenced by signature steps must stay in the scenario.
  s.root_causes.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(plain_count));
  s.root_causes.insert(s.root_causes.end(), overlap.begin(), overlap.begin() + overlap_classes);
  return s;
}

void to_json(nlohmann::json& j, const SynthScenario& s) {
  j = nlohmann::json{{"seed", s.seed},           {"replay_id", s.replay_id},
                     {"capture_id", s.capture_id}, {"num_sessions", s.num_sessions},
                     {"failed_events", s.failed_events}, {"max_filler", s.max_filler},
                     {"object_pool", s.object_pool}};
  auto& arr = j["root_causes"] = nlohmann::json::array();
  for (const auto& rc : s.root_causes) {
    nlohmann::json r{{"label_id", rc.label_id},
                     {"display_name", rc.display_name},
                     {"weight", rc.weight},
                     {"error_templates", rc.error_templates},
                     {"statement_templates", rc.statement_templates},
                     {"error_codes", rc.error_codes},
                     {"request_names", rc.request_names},
                     {"context_dependent", rc.context_dependent},
                     {"overlap_block", rc.overlap_block}};
    auto& sig = r["context_signature"] = nlohmann::json::array();
    for (const auto& st : rc.context_signature)
      sig.push_back({{"statement_template", st.statement_template},
                     {"status", std::string(to_string(st.status))},
                     {"message_template", st.message_template},
                     {"error_code", st.error_code},
                     {"label_id", st.label_id}});
    arr.push_back(std::move(r));
  }
}

void from_json(const nlohmann::json& j, SynthScenario& s) {
  const SynthScenario d;
  s.seed = j.value("seed", d.seed);
  s.replay_id = j.value("replay_id", d.replay_id);
  s.capture_id = j.value("capture_id", d.capture_id);
  s.num_sessions = j.value("num_sessions", d.num_sessions);
  s.failed_events = j.value("failed_events", d.failed_events);
  s.max_filler = j.value("max_filler", d.max_filler);
  s.object_pool = j.value("object_pool", d.object_pool);
  s.root_causes.clear();
  for (const auto& r : j.at("root_causes")) {
    RootCauseSpec rc;
    rc.label_id = r.at("label_id").get<std::string>();
    rc.display_name = r.value("display_name", rc.label_id);
    rc.weight = r.value("weight", 1.0);
    rc.error_templates = r.at("error_templates").get<std::vector<std::string>>();
    rc.statement_templates = r.at("statement_templates").get<std::vector<std::string>>();
    rc.error_codes = r.at("error_codes").get<std::vector<std::int64_t>>();
    rc.request_names = r.at("request_names").get<std::vector<std::string>>();
    rc.context_dependent = r.value("context_dependent", false);
    rc.overlap_block = r.value("overlap_block", -1);
    if (r.contains("context_signature"))
      for (const auto& st : r.at("context_signature")) {
        SignatureStep step;
        step.statement_template = st.at("statement_template").get<std::string>();
        step.status = parse_status(st.at("status").get<std::string>());
        step.message_template = st.at("message_template").get<std::string>();
        step.error_code = st.value("error_code", std::int64_t{0});
        step.label_id = st.value("label_id", std::string());
        rc.context_signature.push_back(std::move(step));
      }
    s.root_causes.push_back(std::move(rc));
  }
}

}  // namespace rtriage
