#ifndef SURVCLUST_IO_HPP_
#define SURVCLUST_IO_HPP_

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "survclust/core.hpp"
#include "survclust/error.hpp"
#include "survclust/ingest.hpp"
#include "survclust/kaplan_meier.hpp"
#include "survclust/leaf_clustering.hpp"
#include "survclust/survival_tree.hpp"

namespace survclust {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

/// Writes through a temporary sibling and renames it into place.
inline void write_file_atomic(const std::filesystem::path &path, const std::string &content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot rename into '" + path.string() + "': " + ec.message());
}

inline json parse_json(const std::string &text, const std::string &what) {
  try {
    return json::parse(text);
  } catch (const json::exception &e) {
    throw Error(ErrorCode::kParse, what + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV (comma separated, optional double-quoted fields)

inline std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline std::string csv_field(const std::string &s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline double parse_number(const std::string &text, const std::string &column) {
  double value = 0.0;
  const char *begin = text.data();
  const char *end = text.data() + text.size();
  while (begin < end && *begin == ' ') ++begin;
  while (end > begin && end[-1] == ' ') --end;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || begin == end) {
    throw Error(ErrorCode::kParse, "column '" + column + "': not a number: '" + text + "'");
  }
  return value;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Schema JSON: {"features": [{"name", "kind": "numeric"|"categorical", "categories"}]}

inline json schema_to_json(const FeatureSchema &schema) {
  json features = json::array();
  for (const auto &f : schema.features()) {
    json j = {{"name", f.name}, {"kind", f.is_categorical() ? "categorical" : "numeric"}};
    if (f.is_categorical()) j["categories"] = f.categories;
    features.push_back(std::move(j));
  }
  return {{"features", std::move(features)}};
}

inline FeatureSchema schema_from_json(const json &j) {
  try {
    std::vector<Feature> features;
    for (const auto &f : j.at("features")) {
      Feature feature;
      feature.name = f.at("name").get<std::string>();
      const auto kind = f.at("kind").get<std::string>();
      if (kind == "categorical") {
        feature.kind = FeatureKind::kCategorical;
        feature.categories = f.at("categories").get<std::vector<std::string>>();
      } else if (kind != "numeric") {
        throw Error(ErrorCode::kInvalidSchema, "feature '" + feature.name + "' has unknown kind '" +
                                                   kind + "'");
      }
      features.push_back(std::move(feature));
    }
    return FeatureSchema(std::move(features));
  } catch (const json::exception &e) {
    throw Error(ErrorCode::kInvalidSchema, e.what());
  }
}

inline FeatureSchema read_schema(const std::filesystem::path &path) {
  return schema_from_json(parse_json(read_file(path), path.string()));
}

// ---------------------------------------------------------------------------
// Subject CSV: id, time, event (0/1) and one column per schema feature.

struct SubjectCsvOptions {
  bool require_outcome = true;
  // Encode unknown categorical levels as -1 instead of failing.
  bool allow_unknown_levels = false;
};

/// Row-at-a-time reader over a subject CSV.
class SubjectCsvReader {
 public:
  SubjectCsvReader(std::istream &in, const FeatureSchema &schema, SubjectCsvOptions options = {})
      : in_(in), schema_(schema), options_(options), feature_column_(schema.size()) {
    std::string header;
    if (!std::getline(in_, header)) throw Error(ErrorCode::kParse, "missing CSV header");
    columns_ = split_csv_line(header);
    std::vector<bool> seen(schema.size(), false);
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      const auto &name = columns_[c];
      if (name == "id") {
        id_column_ = c;
      } else if (name == "time") {
        time_column_ = c;
      } else if (name == "event") {
        event_column_ = c;
      } else if (const auto f = schema.index_of(name)) {
        if (seen[*f]) throw Error(ErrorCode::kSchemaMismatch, "duplicate column '" + name + "'");
        seen[*f] = true;
        feature_column_[*f] = c;
      } else {
        throw Error(ErrorCode::kSchemaMismatch, "column '" + name + "' is not in the schema");
      }
    }
    if (!id_column_) throw Error(ErrorCode::kSchemaMismatch, "column 'id' is missing");
    if (options_.require_outcome && !time_column_) {
      throw Error(ErrorCode::kSchemaMismatch, "column 'time' is missing");
    }
    if (options_.require_outcome && !event_column_) {
      throw Error(ErrorCode::kSchemaMismatch, "column 'event' is missing");
    }
    for (std::size_t f = 0; f < schema.size(); ++f) {
      if (!seen[f]) {
        throw Error(ErrorCode::kSchemaMismatch, "column '" + schema[f].name + "' is missing");
      }
    }
  }

  bool has_outcome() const { return time_column_ && event_column_; }

  /// False at end of input. Blank lines are skipped.
  bool next(Subject &s) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty() || line == "\r") continue;
      const auto fields = split_csv_line(line);
      if (fields.size() != columns_.size()) {
        throw Error(ErrorCode::kParse, "line " + std::to_string(line_no_ + 1) + ": expected " +
                                           std::to_string(columns_.size()) + " fields");
      }
      s = Subject{};
      s.id = fields[*id_column_];
      if (time_column_) s.time = parse_number(fields[*time_column_], "time");
      if (event_column_) {
        const auto &e = fields[*event_column_];
        if (e != "0" && e != "1") {
          throw Error(ErrorCode::kParse, "line " + std::to_string(line_no_ + 1) +
                                             ": event must be 0 or 1");
        }
        s.event = e == "1";
      }
      s.values.resize(schema_.size());
      for (std::size_t f = 0; f < schema_.size(); ++f) {
        const auto &text = fields[feature_column_[f]];
        if (schema_[f].is_categorical()) {
          if (const auto level = schema_.category_index(f, text)) {
            s.values[f] = static_cast<double>(*level);
          } else if (options_.allow_unknown_levels) {
            s.values[f] = -1.0;
          } else {
            throw Error(ErrorCode::kSchemaMismatch, "column '" + schema_[f].name +
                                                        "': unknown level '" + text + "'");
          }
        } else {
          s.values[f] = parse_number(text, schema_[f].name);
        }
      }
      return true;
    }
    return false;
  }

 private:
  std::istream &in_;
  const FeatureSchema &schema_;
  SubjectCsvOptions options_;
  std::vector<std::string> columns_;
  std::optional<std::size_t> id_column_;
  std::optional<std::size_t> time_column_;
  std::optional<std::size_t> event_column_;
  std::vector<std::size_t> feature_column_;
  std::size_t line_no_ = 0;
};

inline SurvivalDataset read_subjects_csv(std::istream &in, const FeatureSchema &schema) {
  SurvivalDataset data;
  data.schema = schema;
  SubjectCsvReader reader(in, schema);
  Subject s;
  while (reader.next(s)) data.subjects.push_back(s);
  return data;
}

inline SurvivalDataset read_subjects_csv(const std::filesystem::path &path,
                                         const FeatureSchema &schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  return read_subjects_csv(in, schema);
}

inline void write_subjects_csv(std::ostream &out, const SurvivalDataset &data) {
  out << "id,time,event";
  for (const auto &f : data.schema.features()) out << ',' << csv_field(f.name);
  out << '\n';
  for (const auto &s : data.subjects) {
    out << csv_field(s.id) << ',' << format_number(s.time) << ',' << (s.event ? '1' : '0');
    for (std::size_t f = 0; f < data.schema.size(); ++f) {
      out << ',';
      if (data.schema[f].is_categorical()) {
        out << csv_field(data.schema[f].categories[s.category(f)]);
      } else {
        out << format_number(s.values[f]);
      }
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Activity and profile CSVs

struct ProfileTable {
  std::map<std::string, double> join_time;
  std::map<std::string, std::vector<double>> values;
};

/// Profile CSV: user_id, join_time, then one column per schema feature.
inline ProfileTable read_profiles_csv(std::istream &in, const FeatureSchema &schema) {
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::kParse, "profile CSV has no header");
  const auto columns = split_csv_line(header);
  std::optional<std::size_t> user_col;
  std::optional<std::size_t> join_col;
  std::vector<std::optional<std::size_t>> feature_col(schema.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] == "user_id") {
      user_col = c;
    } else if (columns[c] == "join_time") {
      join_col = c;
    } else if (const auto f = schema.index_of(columns[c])) {
      feature_col[*f] = c;
    } else {
      throw Error(ErrorCode::kSchemaMismatch, "column '" + columns[c] + "' is not in the schema");
    }
  }
  if (!user_col || !join_col) {
    throw Error(ErrorCode::kSchemaMismatch, "profile CSV needs 'user_id' and 'join_time'");
  }
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (!feature_col[f]) {
      throw Error(ErrorCode::kSchemaMismatch, "column '" + schema[f].name + "' is missing");
    }
  }
  ProfileTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != columns.size()) throw Error(ErrorCode::kParse, "ragged profile row");
    const auto &id = fields[*user_col];
    std::vector<double> values(schema.size());
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const auto &text = fields[*feature_col[f]];
      if (schema[f].is_categorical()) {
        const auto level = schema.category_index(f, text);
        if (!level) {
          throw Error(ErrorCode::kSchemaMismatch,
                      "column '" + schema[f].name + "': unknown level '" + text + "'");
        }
        values[f] = static_cast<double>(*level);
      } else {
        values[f] = parse_number(text, schema[f].name);
      }
    }
    if (!table.join_time.emplace(id, parse_number(fields[*join_col], "join_time")).second) {
      throw Error(ErrorCode::kInvalidLog, "duplicate profile for '" + id + "'");
    }
    table.values.emplace(id, std::move(values));
  }
  return table;
}

/// Activity CSV: user_id, timestamp, direction (sent|received), partner_id.
/// Records after `study_end` are dropped; when `study_end` is unset it
/// becomes the latest timestamp seen.
inline ActivityLog read_activity_csv(std::istream &in, const ProfileTable &profiles,
                                     std::optional<double> study_end) {
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::kParse, "activity CSV has no header");
  const auto columns = split_csv_line(header);
  const auto find = [&](const std::string &name) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c] == name) return c;
    }
    throw Error(ErrorCode::kSchemaMismatch, "activity CSV lacks column '" + name + "'");
  };
  const auto user_col = find("user_id");
  const auto time_col = find("timestamp");
  const auto dir_col = find("direction");
  const auto partner_col = find("partner_id");

  std::map<std::string, std::vector<Activity>> per_user;
  double latest = -INFINITY;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != columns.size()) throw Error(ErrorCode::kParse, "ragged activity row");
    Activity a;
    a.timestamp = parse_number(fields[time_col], "timestamp");
    const auto &dir = fields[dir_col];
    if (dir == "sent") {
      a.direction = Direction::kSent;
    } else if (dir == "received") {
      a.direction = Direction::kReceived;
    } else {
      throw Error(ErrorCode::kParse, "direction must be 'sent' or 'received', got '" + dir + "'");
    }
    a.partner_id = fields[partner_col];
    if (!profiles.join_time.contains(fields[user_col])) {
      throw Error(ErrorCode::kInvalidLog, "activity for unknown user '" + fields[user_col] + "'");
    }
    latest = std::max(latest, a.timestamp);
    per_user[fields[user_col]].push_back(std::move(a));
  }

  ActivityLog log;
  log.study_end = study_end.value_or(latest);
  if (!study_end) {
    for (const auto &[id, join] : profiles.join_time) log.study_end = std::max(log.study_end, join);
  }
  for (const auto &[id, join] : profiles.join_time) {
    UserActivity u;
    u.user_id = id;
    u.join_time = join;
    if (auto it = per_user.find(id); it != per_user.end()) {
      for (auto &a : it->second) {
        if (a.timestamp <= log.study_end) u.activity.push_back(std::move(a));
      }
    }
    std::sort(u.activity.begin(), u.activity.end(), [](const Activity &a, const Activity &b) {
      if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
      if (a.direction != b.direction) return a.direction < b.direction;
      return a.partner_id < b.partner_id;
    });
    log.users.push_back(std::move(u));
  }
  return log;
}

// ---------------------------------------------------------------------------
// Curves, tree, model

inline json curve_to_json(const SurvivalCurve &c) {
  return {{"t", c.event_times}, {"s", c.survival}, {"n_events", c.n_events},
          {"n_subjects", c.n_subjects}};
}

inline SurvivalCurve curve_from_json(const json &j) {
  SurvivalCurve c;
  c.event_times = j.at("t").get<std::vector<double>>();
  c.survival = j.at("s").get<std::vector<double>>();
  c.n_events = j.at("n_events").get<std::size_t>();
  c.n_subjects = j.at("n_subjects").get<std::size_t>();
  if (c.event_times.size() != c.survival.size()) {
    throw Error(ErrorCode::kParse, "curve arrays differ in length");
  }
  return c;
}

inline json tree_config_to_json(const TreeConfig &c) {
  return {{"alpha", c.alpha},
          {"min_leaf_subjects", c.min_leaf_subjects},
          {"min_leaf_events", c.min_leaf_events},
          {"max_depth", c.max_depth},
          {"max_numeric_thresholds", c.max_numeric_thresholds}};
}

inline TreeConfig tree_config_from_json(const json &j) {
  TreeConfig c;
  c.alpha = j.at("alpha").get<double>();
  c.min_leaf_subjects = j.at("min_leaf_subjects").get<std::size_t>();
  c.min_leaf_events = j.at("min_leaf_events").get<std::size_t>();
  c.max_depth = j.at("max_depth").get<std::size_t>();
  c.max_numeric_thresholds = j.at("max_numeric_thresholds").get<std::size_t>();
  return c;
}

inline json tree_to_json(const SurvivalTree &tree) {
  json nodes = json::array();
  for (const auto &n : tree.nodes) {
    json j = {{"id", n.id},
              {"depth", n.depth},
              {"n_subjects", n.n_subjects},
              {"n_events", n.n_events},
              {"n_candidates", n.n_candidates}};
    if (n.is_leaf()) {
      j["leaf_id"] = n.leaf_id;
      j["curve"] = curve_to_json(n.curve);
    } else {
      const auto &s = *n.split;
      const auto &feature = tree.schema[s.feature];
      json split = {{"feature", feature.name},
                    {"p_value", s.p_value},
                    {"statistic", s.statistic}};
      if (s.test.kind == SplitTest::Kind::kLessThan) {
        split["test"] = "lt";
        split["threshold"] = s.test.threshold;
      } else {
        split["test"] = "eq";
        split["category"] = feature.categories[s.test.category];
      }
      j["split"] = std::move(split);
      j["left"] = n.left;
      j["right"] = n.right;
    }
    nodes.push_back(std::move(j));
  }
  return {{"config", tree_config_to_json(tree.config)},
          {"nodes", std::move(nodes)},
          {"leaves", tree.leaves}};
}

inline SurvivalTree tree_from_json(const json &j, const FeatureSchema &schema) {
  try {
    SurvivalTree tree;
    tree.schema = schema;
    tree.config = tree_config_from_json(j.at("config"));
    tree.leaves = j.at("leaves").get<std::vector<std::size_t>>();
    for (const auto &jn : j.at("nodes")) {
      TreeNode n;
      n.id = jn.at("id").get<std::size_t>();
      n.depth = jn.at("depth").get<std::size_t>();
      n.n_subjects = jn.at("n_subjects").get<std::size_t>();
      n.n_events = jn.at("n_events").get<std::size_t>();
      n.n_candidates = jn.value("n_candidates", std::size_t{0});
      if (jn.contains("split")) {
        const auto &js = jn.at("split");
        SplitCandidate s;
        const auto name = js.at("feature").get<std::string>();
        const auto f = schema.index_of(name);
        if (!f) throw Error(ErrorCode::kSchemaMismatch, "tree uses unknown feature '" + name + "'");
        s.feature = *f;
        s.p_value = js.at("p_value").get<double>();
        s.statistic = js.at("statistic").get<double>();
        if (js.at("test").get<std::string>() == "lt") {
          s.test = {SplitTest::Kind::kLessThan, js.at("threshold").get<double>(), 0};
        } else {
          const auto level = schema.category_index(*f, js.at("category").get<std::string>());
          if (!level) throw Error(ErrorCode::kSchemaMismatch, "tree uses unknown level of '" + name + "'");
          s.test = {SplitTest::Kind::kEquals, 0.0, *level};
        }
        n.split = s;
        n.left = jn.at("left").get<std::size_t>();
        n.right = jn.at("right").get<std::size_t>();
      } else {
        n.leaf_id = jn.at("leaf_id").get<std::size_t>();
        n.curve = curve_from_json(jn.at("curve"));
      }
      tree.nodes.push_back(std::move(n));
    }
    if (tree.nodes.empty()) throw Error(ErrorCode::kParse, "tree has no nodes");
    for (const auto &n : tree.nodes) {
      if (!n.is_leaf() && (n.left >= tree.nodes.size() || n.right >= tree.nodes.size())) {
        throw Error(ErrorCode::kParse, "tree child index out of range");
      }
    }
    for (std::size_t l = 0; l < tree.leaves.size(); ++l) {
      if (tree.leaves[l] >= tree.nodes.size() || !tree.nodes[tree.leaves[l]].is_leaf() ||
          tree.nodes[tree.leaves[l]].leaf_id != l) {
        throw Error(ErrorCode::kParse, "tree leaf table is inconsistent");
      }
    }
    return tree;
  } catch (const json::exception &e) {
    throw Error(ErrorCode::kParse, std::string("tree JSON: ") + e.what());
  }
}

inline json model_to_json(const ClusterModel &model) {
  json clusters = json::array();
  for (std::size_t c = 0; c < model.k; ++c) {
    clusters.push_back({{"id", c},
                        {"n_subjects", model.cluster_sizes[c]},
                        {"curve", curve_to_json(model.cluster_curves[c])}});
  }
  return {{"format", "survclust-model"},
          {"version", 1},
          {"schema", schema_to_json(model.tree.schema)},
          {"tree", tree_to_json(model.tree)},
          {"k", model.k},
          {"leaf_to_cluster", model.leaf_to_cluster},
          {"clusters", std::move(clusters)}};
}

inline ClusterModel model_from_json(const json &j) {
  try {
    if (j.value("format", std::string()) != "survclust-model") {
      throw Error(ErrorCode::kParse, "not a survclust model file");
    }
    ClusterModel model;
    const auto schema = schema_from_json(j.at("schema"));
    model.tree = tree_from_json(j.at("tree"), schema);
    model.k = j.at("k").get<std::size_t>();
    model.leaf_to_cluster = j.at("leaf_to_cluster").get<std::vector<std::size_t>>();
    if (model.leaf_to_cluster.size() != model.tree.leaf_count()) {
      throw Error(ErrorCode::kParse, "leaf_to_cluster does not match the tree");
    }
    for (const auto c : model.leaf_to_cluster) {
      if (c >= model.k) throw Error(ErrorCode::kParse, "cluster label out of range");
    }
    for (const auto &jc : j.at("clusters")) {
      model.cluster_sizes.push_back(jc.at("n_subjects").get<std::size_t>());
      model.cluster_curves.push_back(curve_from_json(jc.at("curve")));
    }
    if (model.cluster_curves.size() != model.k) {
      throw Error(ErrorCode::kParse, "cluster table does not match k");
    }
    return model;
  } catch (const json::exception &e) {
    throw Error(ErrorCode::kParse, std::string("model JSON: ") + e.what());
  }
}

}  // namespace survclust

#endif  // SURVCLUST_IO_HPP_
