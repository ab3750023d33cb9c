#include "hetfuse/csv_io.hpp"

#include "hetfuse/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace hetfuse {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << contents;
}

// --- schema config ---------------------------------------------------------

SchemaConfig schema_config_from_json(const json& j) {
  try {
    SchemaConfig cfg;
    cfg.domain_id = j.at("domain_id").get<std::string>();
    std::vector<Channel> channels;
    for (const auto& c : j.at("channels")) {
      Channel ch;
      ch.name = c.at("name").get<std::string>();
      ch.modality = parse_modality(c.value("modality", std::string("OTHER")));
      ch.native_rate = c.value("native_rate", 32.0);
      ch.provenance = c.value("provenance", std::string());
      channels.push_back(std::move(ch));
    }
    cfg.schema = ChannelSchema(std::move(channels));
    if (j.contains("label_set")) cfg.label_set = j.at("label_set").get<std::vector<std::string>>();
    require(!cfg.label_set.empty(), ErrorKind::Parse, "label_set must not be empty");
    if (j.contains("rate")) cfg.rate = j.at("rate").get<double>();
    const auto gran = j.value("block_granularity", std::string("file"));
    if (gran == "file") {
      cfg.granularity = BlockGranularity::file;
    } else if (gran == "label_change") {
      cfg.granularity = BlockGranularity::label_change;
    } else {
      fail(ErrorKind::Parse, "block_granularity must be 'file' or 'label_change'");
    }
    return cfg;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("schema config: ") + e.what());
  }
}

json to_json(const SchemaConfig& cfg) {
  json channels = json::array();
  for (const auto& c : cfg.schema.channels()) {
    json jc = {{"name", c.name}, {"modality", std::string(to_string(c.modality))}, {"native_rate", c.native_rate}};
    if (!c.provenance.empty()) jc["provenance"] = c.provenance;
    channels.push_back(std::move(jc));
  }
  json j = {{"domain_id", cfg.domain_id},
            {"label_set", cfg.label_set},
            {"channels", channels},
            {"block_granularity", cfg.granularity == BlockGranularity::file ? "file" : "label_change"}};
  if (cfg.rate) j["rate"] = *cfg.rate;
  return j;
}

SchemaConfig load_schema_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  return schema_config_from_json(j);
}

SchemaConfig schema_config_of(const SensorDataset& ds) {
  SchemaConfig cfg;
  cfg.domain_id = ds.domain_id;
  cfg.schema = ds.schema;
  cfg.label_set = ds.label_set;
  cfg.rate = ds.rate;
  return cfg;
}

// --- CSV -------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_number(std::string_view field, const fs::path& file, std::size_t line) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
  if (field.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    fail(ErrorKind::Parse, file.string() + ":" + std::to_string(line) + ": not a number '" + std::string(field) + "'");
  }
  return v;
}

struct RawFile {
  std::vector<double> timestamps;
  std::vector<std::string> subjects;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
};

RawFile read_block_csv(const fs::path& file, const SchemaConfig& cfg, const SensorDataset& proto) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::Io, "cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Parse, file.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> expected{"timestamp", "subject_id"};
  for (const auto& n : cfg.schema.names()) expected.push_back(n);
  expected.emplace_back("label");
  const auto header = split_commas(line);
  bool ok = header.size() == expected.size();
  for (std::size_t i = 0; ok && i < header.size(); ++i) ok = header[i] == expected[i];
  if (!ok) fail(ErrorKind::SchemaMismatch, file.string() + ": header disagrees with schema of " + cfg.domain_id);

  RawFile raw;
  const std::size_t D = cfg.schema.size();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_commas(line);
    if (f.size() != D + 3) {
      fail(ErrorKind::Parse, file.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(D + 3) + " fields");
    }
    const double t = parse_number(f[0], file, lineno);
    if (!raw.timestamps.empty() && !(t > raw.timestamps.back())) {
      fail(ErrorKind::Parse, file.string() + ":" + std::to_string(lineno) + ": timestamps must be strictly increasing");
    }
    raw.timestamps.push_back(t);
    raw.subjects.emplace_back(f[1]);
    std::vector<double> row(D);
    for (std::size_t c = 0; c < D; ++c) row[c] = parse_number(f[2 + c], file, lineno);
    raw.rows.push_back(std::move(row));
    raw.labels.push_back(proto.label_index(f[D + 2]));
  }
  if (raw.rows.empty()) fail(ErrorKind::EmptyBlock, file.string() + " has no samples");
  return raw;
}

Block make_block(const RawFile& raw, std::size_t begin, std::size_t end) {
  Block b;
  b.subject_id = raw.subjects[begin];
  const auto D = raw.rows[begin].size();
  b.samples.resize(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(D));
  for (std::size_t t = begin; t < end; ++t) {
    for (std::size_t c = 0; c < D; ++c) b.samples(static_cast<Eigen::Index>(t - begin), static_cast<Eigen::Index>(c)) = raw.rows[t][c];
  }
  b.labels.assign(raw.labels.begin() + static_cast<std::ptrdiff_t>(begin), raw.labels.begin() + static_cast<std::ptrdiff_t>(end));
  return b;
}

}  // namespace

SensorDataset load_dataset(const fs::path& dir, const SchemaConfig& cfg) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Io, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorKind::Io, "no CSV files in " + dir.string());

  SensorDataset ds;
  ds.domain_id = cfg.domain_id;
  ds.schema = cfg.schema;
  ds.label_set = cfg.label_set;

  std::optional<double> inferred_rate;
  for (const auto& file : files) {
    const auto raw = read_block_csv(file, cfg, ds);
    if (!inferred_rate && raw.timestamps.size() >= 2) {
      std::vector<double> dt;
      for (std::size_t i = 1; i < raw.timestamps.size(); ++i) dt.push_back(raw.timestamps[i] - raw.timestamps[i - 1]);
      std::nth_element(dt.begin(), dt.begin() + static_cast<std::ptrdiff_t>(dt.size() / 2), dt.end());
      inferred_rate = 1.0 / dt[dt.size() / 2];
    }
    if (cfg.granularity == BlockGranularity::file) {
      ds.blocks.push_back(make_block(raw, 0, raw.rows.size()));
    } else {
      std::size_t start = 0;
      for (std::size_t t = 1; t <= raw.rows.size(); ++t) {
        if (t == raw.rows.size() || raw.labels[t] != raw.labels[t - 1]) {
          ds.blocks.push_back(make_block(raw, start, t));
          start = t;
        }
      }
    }
  }
  for (std::size_t i = 0; i < ds.blocks.size(); ++i) ds.blocks[i].origin = {i, 0};
  ds.rate = cfg.rate ? *cfg.rate : inferred_rate.value_or(32.0);
  return ds;
}

SensorDataset load_dataset(const fs::path& dir) { return load_dataset(dir, load_schema_config(dir / "schema.json")); }

void write_dataset(const fs::path& dir, const SensorDataset& ds) {
  fs::create_directories(dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") fs::remove(e.path());
  }
  write_file(dir / "schema.json", to_json(schema_config_of(ds)).dump(2) + "\n");

  const auto names = ds.schema.names();
  for (std::size_t i = 0; i < ds.blocks.size(); ++i) {
    const auto& b = ds.blocks[i];
    std::string out = "timestamp,subject_id";
    for (const auto& n : names) out += "," + n;
    out += ",label\n";
    for (Eigen::Index t = 0; t < b.samples.rows(); ++t) {
      out += format_double(static_cast<double>(b.origin.offset + static_cast<std::size_t>(t)) / ds.rate);
      out += ",";
      out += b.subject_id;
      for (Eigen::Index c = 0; c < b.samples.cols(); ++c) {
        out += ",";
        out += format_double(b.samples(t, c));
      }
      out += ",";
      out += ds.label_set.at(static_cast<std::size_t>(b.labels[static_cast<std::size_t>(t)]));
      out += "\n";
    }
    char name[32];
    std::snprintf(name, sizeof(name), "block_%04zu.csv", i);
    write_file(dir / name, out);
  }
}

}  // namespace hetfuse
