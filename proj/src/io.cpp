#include "flowsynth/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace flowsynth::io {

using ad::Tensor;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::Io, "error while reading '" + path.string() + "'");
  return ss.str();
}

template <class F>
void write_file(const fs::path& path, F&& body, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  body(out);
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "error while writing '" + path.string() + "'");
}

bool parse_real(const std::string& raw, double& out) {
  const std::string s = trim(raw);
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [p, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && std::isfinite(out);
}

template <class Int>
Int parse_int(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  Int v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) throw Error(ErrorKind::Parse, "'" + key + "': expected an integer, got '" + raw + "'");
  return v;
}

double parse_double(const std::string& key, const std::string& raw) {
  double v = 0.0;
  if (!parse_real(raw, v)) throw Error(ErrorKind::Parse, "'" + key + "': expected a finite real number, got '" + raw + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw Error(ErrorKind::Parse, "'" + key + "': expected true or false, got '" + raw + "'");
}

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line;
};

// RFC 4180 records. Entirely empty lines are skipped.
std::vector<CsvRecord> split_csv(const std::string& text, const std::string& source) {
  std::vector<CsvRecord> out;
  std::size_t i = 0, line = 1;
  const std::size_t n = text.size();
  while (i < n) {
    CsvRecord rec{{}, line};
    std::string field;
    bool any = false;
    for (;;) {
      if (i < n && text[i] == '"') {
        any = true;
        ++i;
        for (;;) {
          if (i >= n) throw Error(ErrorKind::Parse, source + ": unterminated quoted field starting on line " + std::to_string(rec.line));
          if (text[i] == '"') {
            if (i + 1 < n && text[i + 1] == '"') {
              field += '"';
              i += 2;
              continue;
            }
            ++i;
            break;
          }
          if (text[i] == '\n') ++line;
          field += text[i++];
        }
        if (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          throw Error(ErrorKind::Parse, source + ": unexpected character after closing quote on line " + std::to_string(line));
        }
      } else {
        while (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          if (text[i] == '"') throw Error(ErrorKind::Parse, source + ": stray quote in unquoted field on line " + std::to_string(line));
          field += text[i++];
        }
      }
      rec.fields.push_back(std::move(field));
      field.clear();
      if (i < n && text[i] == ',') {
        any = true;
        ++i;
        continue;
      }
      break;
    }
    if (i < n && text[i] == '\r') ++i;
    if (i < n && text[i] == '\n') {
      ++i;
      ++line;
    }
    if (!any && rec.fields.size() == 1 && rec.fields[0].empty()) continue;
    out.push_back(std::move(rec));
  }
  return out;
}

bool needs_quotes(const std::string& s) { return s.empty() || s.find_first_of(",\"\r\n") != std::string::npos; }

void write_field(std::ostream& out, const std::string& s) {
  if (!needs_quotes(s)) {
    out << s;
    return;
  }
  out << '"';
  for (char c : s) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc()) throw Error(ErrorKind::Format, "cannot format real number");
  return std::string(buf, p);
}

// ---------------------------------------------------------------------------
// CSV

Table parse_csv(std::istream& in, const Schema& schema, const std::string& source) {
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto records = split_csv(ss.str(), source);
  if (records.empty()) throw Error(ErrorKind::Parse, source + ": missing header row");
  const auto& header = records.front().fields;
  std::unordered_map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name = trim(header[i]);
    if (!where.emplace(name, i).second) throw Error(ErrorKind::Parse, source + ": duplicate column '" + name + "' in header");
  }
  std::vector<std::size_t> pos(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto it = where.find(schema[c].name);
    if (it == where.end()) throw Error(ErrorKind::Parse, source + ": missing column '" + schema[c].name + "'");
    pos[c] = it->second;
  }
  if (header.size() != schema.size()) {
    for (const auto& [name, idx] : where) {
      if (!schema.find(name)) throw Error(ErrorKind::Parse, source + ": column '" + name + "' is not in the schema");
    }
  }
  if (records.size() == 1) throw Error(ErrorKind::Parse, source + ": no records");

  Table t(schema);
  Record rec(schema.size());
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& f = records[r].fields;
    if (f.size() != header.size()) {
      throw Error(ErrorKind::Parse, source + ": row " + std::to_string(r) + " has " + std::to_string(f.size()) + " fields, expected " +
                                        std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const std::string& cell = f[pos[c]];
      if (schema[c].kind == ColumnKind::Continuous) {
        double v = 0.0;
        if (!parse_real(cell, v)) {
          throw Error(ErrorKind::Parse, source + ": row " + std::to_string(r) + ", column '" + schema[c].name + "': cannot parse '" + cell +
                                            "' as a finite real number");
        }
        rec[c] = v;
      } else {
        rec[c] = cell;
      }
    }
    t.append(rec);
  }
  return t;
}

Table read_csv(const fs::path& path, const Schema& schema) {
  std::istringstream in(slurp(path));
  return parse_csv(in, schema, path.string());
}

std::vector<std::string> read_csv_header(const fs::path& path) {
  const auto records = split_csv(slurp(path), path.string());
  if (records.empty()) throw Error(ErrorKind::Parse, path.string() + ": missing header row");
  std::vector<std::string> names;
  for (const auto& f : records.front().fields) names.push_back(trim(f));
  return names;
}

Schema infer_schema(const fs::path& path, const std::string& label) {
  const auto records = split_csv(slurp(path), path.string());
  if (records.empty()) throw Error(ErrorKind::Parse, path.string() + ": missing header row");
  if (records.size() == 1) throw Error(ErrorKind::Parse, path.string() + ": no records");
  const auto& header = records.front().fields;
  std::vector<ColumnSpec> cols;
  bool found = label.empty();
  for (std::size_t c = 0; c < header.size(); ++c) {
    ColumnSpec spec{trim(header[c]), ColumnKind::Continuous, ColumnRole::Feature};
    if (spec.name == label) {
      spec.kind = ColumnKind::Categorical;
      spec.role = ColumnRole::Label;
      found = true;
    } else {
      for (std::size_t r = 1; r < records.size(); ++r) {
        double v = 0.0;
        if (c >= records[r].fields.size() || !parse_real(records[r].fields[c], v)) {
          spec.kind = ColumnKind::Categorical;
          break;
        }
      }
    }
    cols.push_back(std::move(spec));
  }
  if (!found) throw Error(ErrorKind::InvalidArgument, path.string() + ": label column '" + label + "' not found");
  return Schema(std::move(cols));
}

void write_csv(std::ostream& out, const Table& t) {
  for (std::size_t c = 0; c < t.cols(); ++c) {
    if (c) out << ',';
    write_field(out, t.schema()[c].name);
  }
  out << '\n';
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      if (c) out << ',';
      if (t.schema()[c].kind == ColumnKind::Continuous) out << format_real(t.reals(c)[r]);
      else write_field(out, t.cats(c)[r]);
    }
    out << '\n';
  }
}

void write_csv(const fs::path& path, const Table& t) {
  write_file(path, [&](std::ostream& o) { write_csv(o, t); }, true);
}

// ---------------------------------------------------------------------------
// Schema

Schema parse_schema(std::istream& in, const std::string& source) {
  std::vector<ColumnSpec> cols;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::vector<std::string> parts;
    std::stringstream ls(s);
    std::string part;
    while (std::getline(ls, part, ',')) parts.push_back(trim(part));
    if (parts.size() != 3) throw Error(ErrorKind::Parse, source + ": line " + std::to_string(no) + ": expected name,kind,role");
    ColumnSpec spec;
    spec.name = parts[0];
    if (parts[1] == "continuous") spec.kind = ColumnKind::Continuous;
    else if (parts[1] == "categorical") spec.kind = ColumnKind::Categorical;
    else throw Error(ErrorKind::Parse, source + ": line " + std::to_string(no) + ": unknown kind '" + parts[1] + "'");
    if (parts[2] == "feature") spec.role = ColumnRole::Feature;
    else if (parts[2] == "label") spec.role = ColumnRole::Label;
    else throw Error(ErrorKind::Parse, source + ": line " + std::to_string(no) + ": unknown role '" + parts[2] + "'");
    cols.push_back(std::move(spec));
  }
  if (cols.empty()) throw Error(ErrorKind::Parse, source + ": no columns");
  try {
    return Schema(std::move(cols));
  } catch (const Error& e) {
    throw Error(ErrorKind::Parse, source + ": " + e.what());
  }
}

Schema read_schema(const fs::path& path) {
  std::istringstream in(slurp(path));
  return parse_schema(in, path.string());
}

void write_schema(std::ostream& out, const Schema& s) {
  for (const auto& c : s.columns()) out << c.name << ',' << to_string(c.kind) << ',' << to_string(c.role) << '\n';
}

void write_schema(const fs::path& path, const Schema& s) {
  write_file(path, [&](std::ostream& o) { write_schema(o, s); });
}

// ---------------------------------------------------------------------------
// key=value

void KeyValues::set(const std::string& key, const std::string& value) {
  for (auto& kv : items_) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  items_.emplace_back(key, value);
}

bool KeyValues::has(const std::string& key) const {
  return std::any_of(items_.begin(), items_.end(), [&](const auto& kv) { return kv.first == key; });
}

const std::string& KeyValues::get(const std::string& key) const {
  for (const auto& kv : items_) {
    if (kv.first == key) return kv.second;
  }
  throw Error(ErrorKind::Parse, "missing key '" + key + "'");
}

KeyValues parse_key_values(std::istream& in, const std::string& source) {
  KeyValues kv;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Parse, source + ": line " + std::to_string(no) + ": expected key=value");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::Parse, source + ": line " + std::to_string(no) + ": empty key");
    if (kv.has(key)) throw Error(ErrorKind::Parse, source + ": line " + std::to_string(no) + ": duplicate key '" + key + "'");
    kv.set(key, trim(s.substr(eq + 1)));
  }
  return kv;
}

KeyValues read_key_values(const fs::path& path) {
  std::istringstream in(slurp(path));
  return parse_key_values(in, path.string());
}

void write_key_values(std::ostream& out, const KeyValues& kv) {
  for (const auto& [k, v] : kv.items()) out << k << '=' << v << '\n';
}

void write_key_values(const fs::path& path, const KeyValues& kv) {
  write_file(path, [&](std::ostream& o) { write_key_values(o, kv); });
}

KeyValues config_to_kv(const train::TrainConfig& c) {
  KeyValues kv;
  kv.set("max_iter", std::to_string(c.max_iter));
  kv.set("period_d", std::to_string(c.period_d));
  kv.set("period_g", std::to_string(c.period_g));
  kv.set("period_l", std::to_string(c.period_l));
  kv.set("gamma", c.gamma);
  kv.set("batch_size", std::to_string(c.batch_size));
  kv.set("latent_dim", std::to_string(c.latent_dim));
  kv.set("enc_layers", std::to_string(c.enc_layers));
  kv.set("dec_layers", std::to_string(c.dec_layers));
  kv.set("disc_layers", std::to_string(c.disc_layers));
  kv.set("ae_hidden", std::to_string(c.ae_hidden));
  kv.set("disc_hidden", std::to_string(c.disc_hidden));
  kv.set("dropout", c.dropout);
  kv.set("leaky_slope", c.leaky_slope);
  kv.set("flow_layers", std::to_string(c.flow_layers));
  kv.set("flow_width_mult", c.flow_width_mult);
  kv.set("gate", flow::to_string(c.gate));
  kv.set("solver", flow::to_string(c.solver.method));
  kv.set("solver_steps", std::to_string(c.solver.steps));
  kv.set("solver_rtol", c.solver.rtol);
  kv.set("solver_atol", c.solver.atol);
  kv.set("probe", flow::to_string(c.probe));
  kv.set("probe_samples", std::to_string(c.probe_samples));
  kv.set("lr", c.lr);
  kv.set("gen_lr", c.gen_lr);
  kv.set("disc_lr", c.disc_lr);
  kv.set("beta1", c.beta1);
  kv.set("beta2", c.beta2);
  kv.set("gp_lambda", c.gp_lambda);
  kv.set("adv_weight", c.adv_weight);
  kv.set("adv_sign", c.adv_sign);
  kv.set("adv_decoder", c.adv_decoder ? "true" : "false");
  kv.set("metric", train::to_string(c.metric));
  kv.set("validation_interval", std::to_string(c.validation_interval));
  kv.set("seed", std::to_string(c.seed));
  return kv;
}

train::TrainConfig config_from_kv(const KeyValues& kv, const std::vector<std::string>& ignore) {
  train::TrainConfig c;
  using Setter = void (*)(train::TrainConfig&, const std::string&, const std::string&);
  static const std::map<std::string, Setter> setters = {
      {"max_iter", [](auto& c, const auto& k, const auto& v) { c.max_iter = parse_int<std::int64_t>(k, v); }},
      {"period_d", [](auto& c, const auto& k, const auto& v) { c.period_d = parse_int<int>(k, v); }},
      {"period_g", [](auto& c, const auto& k, const auto& v) { c.period_g = parse_int<int>(k, v); }},
      {"period_l", [](auto& c, const auto& k, const auto& v) { c.period_l = parse_int<int>(k, v); }},
      {"gamma", [](auto& c, const auto& k, const auto& v) { c.gamma = parse_double(k, v); }},
      {"batch_size", [](auto& c, const auto& k, const auto& v) { c.batch_size = parse_int<int>(k, v); }},
      {"latent_dim", [](auto& c, const auto& k, const auto& v) { c.latent_dim = parse_int<int>(k, v); }},
      {"enc_layers", [](auto& c, const auto& k, const auto& v) { c.enc_layers = parse_int<int>(k, v); }},
      {"dec_layers", [](auto& c, const auto& k, const auto& v) { c.dec_layers = parse_int<int>(k, v); }},
      {"disc_layers", [](auto& c, const auto& k, const auto& v) { c.disc_layers = parse_int<int>(k, v); }},
      {"ae_hidden", [](auto& c, const auto& k, const auto& v) { c.ae_hidden = parse_int<int>(k, v); }},
      {"disc_hidden", [](auto& c, const auto& k, const auto& v) { c.disc_hidden = parse_int<int>(k, v); }},
      {"dropout", [](auto& c, const auto& k, const auto& v) { c.dropout = parse_double(k, v); }},
      {"leaky_slope", [](auto& c, const auto& k, const auto& v) { c.leaky_slope = parse_double(k, v); }},
      {"flow_layers", [](auto& c, const auto& k, const auto& v) { c.flow_layers = parse_int<int>(k, v); }},
      {"flow_width_mult", [](auto& c, const auto& k, const auto& v) { c.flow_width_mult = parse_double(k, v); }},
      {"gate", [](auto& c, const auto&, const auto& v) { c.gate = flow::gate_kind_from_string(v); }},
      {"solver", [](auto& c, const auto&, const auto& v) { c.solver.method = flow::solver_method_from_string(v); }},
      {"solver_steps", [](auto& c, const auto& k, const auto& v) { c.solver.steps = parse_int<int>(k, v); }},
      {"solver_rtol", [](auto& c, const auto& k, const auto& v) { c.solver.rtol = parse_double(k, v); }},
      {"solver_atol", [](auto& c, const auto& k, const auto& v) { c.solver.atol = parse_double(k, v); }},
      {"probe", [](auto& c, const auto&, const auto& v) { c.probe = flow::probe_kind_from_string(v); }},
      {"probe_samples", [](auto& c, const auto& k, const auto& v) { c.probe_samples = parse_int<int>(k, v); }},
      {"lr", [](auto& c, const auto& k, const auto& v) { c.lr = parse_double(k, v); }},
      {"gen_lr", [](auto& c, const auto& k, const auto& v) { c.gen_lr = parse_double(k, v); }},
      {"disc_lr", [](auto& c, const auto& k, const auto& v) { c.disc_lr = parse_double(k, v); }},
      {"beta1", [](auto& c, const auto& k, const auto& v) { c.beta1 = parse_double(k, v); }},
      {"beta2", [](auto& c, const auto& k, const auto& v) { c.beta2 = parse_double(k, v); }},
      {"gp_lambda", [](auto& c, const auto& k, const auto& v) { c.gp_lambda = parse_double(k, v); }},
      {"adv_weight", [](auto& c, const auto& k, const auto& v) { c.adv_weight = parse_double(k, v); }},
      {"adv_sign", [](auto& c, const auto& k, const auto& v) { c.adv_sign = parse_double(k, v); }},
      {"adv_decoder", [](auto& c, const auto& k, const auto& v) { c.adv_decoder = parse_bool(k, v); }},
      {"metric", [](auto& c, const auto&, const auto& v) { c.metric = train::validation_metric_from_string(v); }},
      {"validation_interval", [](auto& c, const auto& k, const auto& v) { c.validation_interval = parse_int<int>(k, v); }},
      {"seed", [](auto& c, const auto& k, const auto& v) { c.seed = parse_int<std::uint64_t>(k, v); }},
  };
  for (const auto& [key, value] : kv.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) {
      if (std::find(ignore.begin(), ignore.end(), key) != ignore.end()) continue;
      throw Error(ErrorKind::Parse, "unknown config key '" + key + "'");
    }
    try {
      it->second(c, key, value);
    } catch (const Error& e) {
      throw Error(ErrorKind::Parse, std::string("config: ") + e.what());
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Manifest

RunManifest read_manifest(const fs::path& path) {
  const KeyValues kv = read_key_values(path);
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& key) {
    fs::path p = kv.get(key);
    return p.is_absolute() ? p : base / p;
  };
  auto existing = [&](const std::string& key) {
    fs::path p = resolve(key);
    if (!fs::exists(p)) throw Error(ErrorKind::Io, path.string() + ": " + key + " path '" + p.string() + "' does not exist");
    return p;
  };
  static const std::vector<std::string> own = {"train", "val", "test", "schema", "checkpoint_dir", "output_dir", "seeds", "n_samples", "bins", "task"};
  RunManifest m;
  m.train = existing("train");
  m.val = existing("val");
  m.test = existing("test");
  m.schema = existing("schema");
  m.output_dir = resolve("output_dir");
  m.checkpoint_dir = kv.has("checkpoint_dir") ? resolve("checkpoint_dir") : m.output_dir;
  {
    std::stringstream ss(kv.get("seeds"));
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (trim(part).empty()) continue;
      m.seeds.push_back(parse_int<std::uint64_t>("seeds", part));
    }
  }
  if (m.seeds.empty()) throw Error(ErrorKind::Parse, path.string() + ": seed list is empty");
  if (kv.has("n_samples")) m.n_samples = parse_int<std::size_t>("n_samples", kv.get("n_samples"));
  if (kv.has("bins")) m.bins = parse_int<int>("bins", kv.get("bins"));
  if (m.bins < 1) throw Error(ErrorKind::Parse, path.string() + ": bins must be >= 1");
  if (kv.has("task")) m.task = eval::task_from_string(kv.get("task"));
  m.config = config_from_kv(kv, own);
  return m;
}

// ---------------------------------------------------------------------------
// Reports

KeyValues eval_report_kv(const eval::EvalReport& r) {
  KeyValues kv;
  kv.set("task", eval::to_string(r.task));
  for (const auto& [k, v] : r.averaged) kv.set(k, v);
  for (const auto& [model, metrics] : r.per_model) {
    for (const auto& [k, v] : metrics) kv.set(model + "." + k, v);
  }
  return kv;
}

KeyValues attack_report_kv(const privacy::AttackResult& r) {
  KeyValues kv;
  kv.set("roc_auc", r.roc_auc);
  kv.set("members", std::to_string(r.member_errors.size()));
  kv.set("nonmembers", std::to_string(r.nonmember_errors.size()));
  const std::pair<const char*, double> levels[] = {{"min", 0.0}, {"q25", 0.25}, {"median", 0.5}, {"q75", 0.75}, {"max", 1.0}};
  for (const auto& [name, q] : levels) kv.set(std::string("member_error_") + name, privacy::quantile(r.member_errors, q));
  for (const auto& [name, q] : levels) kv.set(std::string("nonmember_error_") + name, privacy::quantile(r.nonmember_errors, q));
  return kv;
}

void write_histogram_tsv(std::ostream& out, const eval::DistanceHistogram& h) {
  out << "# mean=" << format_real(h.mean) << '\n';
  out << "# median=" << format_real(h.median) << '\n';
  out << "# bin_width=" << format_real(h.bin_width) << '\n';
  out << "bin_center\tdensity\n";
  for (std::size_t i = 0; i < h.centers.size(); ++i) out << format_real(h.centers[i]) << '\t' << format_real(h.density[i]) << '\n';
}

void write_histogram_tsv(const fs::path& path, const eval::DistanceHistogram& h) {
  write_file(path, [&](std::ostream& o) { write_histogram_tsv(o, h); });
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

constexpr char kMagic[8] = {'F', 'S', 'Y', 'N', 'C', 'K', 'P', 'T'};
constexpr std::size_t kHeader = 8 + 4 + 8;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_ += s;
  }
  void tensor(const Tensor& t) {
    u64(static_cast<std::uint64_t>(t.rows()));
    u64(static_cast<std::uint64_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) f64(t.data()[i]);
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& b, std::size_t pos, std::size_t end) : b_(b), pos_(pos), end_(end) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(b_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    const std::uint64_t r = u64(), c = u64();
    if (r > (1u << 30) || c > (1u << 30)) throw Error(ErrorKind::Format, "checkpoint: implausible tensor shape");
    need(r * c * 8);
    Tensor t(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = f64();
    return t;
  }
  std::uint64_t count(std::uint64_t limit = 1u << 24) {
    const std::uint64_t n = u64();
    if (n > limit) throw Error(ErrorKind::Format, "checkpoint: implausible element count");
    return n;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::uint64_t n) const {
    if (n > end_ - pos_) throw Error(ErrorKind::Format, "checkpoint: payload ends early");
  }
  const std::string& b_;
  std::size_t pos_;
  std::size_t end_;
};

void put_params(Writer& w, const ad::ParamSet& p) {
  w.i64(p.adam_steps());
  w.u64(p.size());
  for (const auto& e : p.entries()) {
    w.str(e.name);
    w.tensor(e.value);
    w.tensor(e.m);
    w.tensor(e.v);
  }
}

ad::ParamSet get_params(Reader& r) {
  ad::ParamSet p;
  p.set_adam_steps(r.i64());
  const auto n = r.count();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.str();
    Tensor value = r.tensor();
    Tensor m = r.tensor();
    Tensor v = r.tensor();
    if (m.rows() != value.rows() || m.cols() != value.cols() || v.rows() != value.rows() || v.cols() != value.cols()) {
      throw Error(ErrorKind::Format, "checkpoint: optimizer state shape mismatch for '" + name + "'");
    }
    const auto k = p.add(std::move(name), std::move(value));
    p.entry(k).m = std::move(m);
    p.entry(k).v = std::move(v);
  }
  return p;
}

void put_mlp(Writer& w, const nets::Mlp& m) {
  w.str(m.prefix());
  w.u64(m.widths().size());
  for (int x : m.widths()) w.i64(x);
  w.u8(m.activation() == nets::Activation::Relu ? 0 : 1);
  w.f64(m.leaky_slope());
  w.f64(m.dropout());
  put_params(w, m.params());
}

nets::Mlp get_mlp(Reader& r) {
  std::string prefix = r.str();
  std::vector<int> widths(r.count(64));
  for (auto& x : widths) x = static_cast<int>(r.i64());
  const auto act = r.u8();
  if (act > 1) throw Error(ErrorKind::Format, "checkpoint: unknown activation code");
  const double slope = r.f64();
  const double dropout = r.f64();
  ad::ParamSet p = get_params(r);
  return nets::Mlp(std::move(prefix), std::move(widths), act == 0 ? nets::Activation::Relu : nets::Activation::LeakyRelu, slope, dropout,
                   std::move(p));
}

train::Checkpoint decode_payload(Reader r);

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string encode_checkpoint(const train::Checkpoint& c) {
  Writer w;
  {
    std::ostringstream cfg;
    write_key_values(cfg, config_to_kv(c.config));
    w.str(cfg.str());
  }
  const Schema& s = c.transform.schema();
  w.u64(s.size());
  for (const auto& col : s.columns()) {
    w.str(col.name);
    w.u8(col.kind == ColumnKind::Continuous ? 0 : 1);
    w.u8(col.role == ColumnRole::Feature ? 0 : 1);
  }
  for (const auto& t : c.transform.columns()) {
    w.u8(t.kind == ColumnKind::Continuous ? 0 : 1);
    w.u64(t.modes.size());
    for (const auto& m : t.modes) {
      w.f64(m.weight);
      w.f64(m.mean);
      w.f64(m.stddev);
    }
    w.u64(t.vocabulary.size());
    for (const auto& v : t.vocabulary) w.str(v);
  }
  put_mlp(w, c.encoder);
  put_mlp(w, c.decoder);
  put_mlp(w, c.discriminator);
  const auto& fa = c.generator.arch();
  w.i64(fa.dim);
  w.i64(fa.layers);
  w.f64(fa.width_mult);
  w.u8(fa.gate == flow::GateKind::Time ? 0 : 1);
  put_params(w, c.generator.params());
  w.i64(c.iteration);
  w.f64(c.best_score);
  w.u64(c.history.size());
  for (const auto& h : c.history) {
    w.i64(h.iteration);
    w.f64(h.score);
  }

  const std::string& payload = w.bytes();
  Writer out;
  out.bytes().append(kMagic, sizeof kMagic);
  out.u32(kCheckpointVersion);
  out.u64(payload.size());
  out.bytes() += payload;
  out.u64(fnv1a64(payload.data(), payload.size()));
  return std::move(out.bytes());
}

train::Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || !std::equal(kMagic, kMagic + sizeof kMagic, bytes.begin())) {
    throw Error(ErrorKind::Format, "not a checkpoint file (bad magic)");
  }
  if (bytes.size() < kHeader) throw Error(ErrorKind::Format, "truncated checkpoint: header incomplete");
  Reader head(bytes, sizeof kMagic, kHeader);
  const std::uint32_t version = head.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::Format, "unsupported checkpoint format version " + std::to_string(version) + " (this build reads version " +
                                       std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t len = head.u64();
  const std::uint64_t expected = kHeader + len + 8;
  if (len > bytes.size() || bytes.size() < expected) {
    throw Error(ErrorKind::Format, "truncated checkpoint: expected " + std::to_string(expected) + " bytes, found " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) throw Error(ErrorKind::Format, "checkpoint has trailing bytes");
  Reader tail(bytes, kHeader + len, bytes.size());
  if (tail.u64() != fnv1a64(bytes.data() + kHeader, len)) throw Error(ErrorKind::Format, "checkpoint checksum mismatch");

  try {
    return decode_payload(Reader(bytes, kHeader, kHeader + len));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Format) throw;
    throw Error(ErrorKind::Format, std::string("corrupt checkpoint: ") + e.what());
  }
}

namespace {

train::Checkpoint decode_payload(Reader r) {
  train::Checkpoint c;
  {
    std::istringstream cfg(r.str());
    c.config = config_from_kv(parse_key_values(cfg, "checkpoint config"));
  }
  std::vector<ColumnSpec> cols(r.count());
  for (auto& col : cols) {
    col.name = r.str();
    col.kind = r.u8() == 0 ? ColumnKind::Continuous : ColumnKind::Categorical;
    col.role = r.u8() == 0 ? ColumnRole::Feature : ColumnRole::Label;
  }
  Schema schema(cols);
  std::vector<prep::ColumnTransform> transforms(cols.size());
  for (auto& t : transforms) {
    t.kind = r.u8() == 0 ? ColumnKind::Continuous : ColumnKind::Categorical;
    t.modes.resize(r.count());
    for (auto& m : t.modes) {
      m.weight = r.f64();
      m.mean = r.f64();
      m.stddev = r.f64();
    }
    t.vocabulary.resize(r.count());
    for (auto& v : t.vocabulary) v = r.str();
  }
  c.transform = prep::TransformSpec(std::move(schema), std::move(transforms));
  c.encoder = get_mlp(r);
  c.decoder = get_mlp(r);
  c.discriminator = get_mlp(r);
  flow::FlowArch fa;
  fa.dim = static_cast<int>(r.i64());
  fa.layers = static_cast<int>(r.i64());
  fa.width_mult = r.f64();
  fa.gate = r.u8() == 0 ? flow::GateKind::Time : flow::GateKind::Learned;
  c.generator = flow::OdeFunc(fa, get_params(r));
  c.iteration = r.i64();
  c.best_score = r.f64();
  c.history.resize(r.count());
  for (auto& h : c.history) {
    h.iteration = r.i64();
    h.score = r.f64();
  }
  if (!r.done()) throw Error(ErrorKind::Format, "checkpoint payload has unread bytes");
  if (c.encoder.in_width() != c.transform.width() || c.decoder.out_width() != c.transform.width() ||
      c.encoder.out_width() != fa.dim || c.decoder.in_width() != fa.dim || c.discriminator.in_width() != fa.dim) {
    throw Error(ErrorKind::Format, "checkpoint networks disagree on their dimensions");
  }
  return c;
}

}  // namespace

void save_checkpoint(const train::Checkpoint& c, const fs::path& path) {
  const std::string bytes = encode_checkpoint(c);
  write_file(path, [&](std::ostream& o) { o.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); }, true);
}

train::Checkpoint load_checkpoint(const fs::path& path) {
  const std::string bytes = slurp(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace flowsynth::io
