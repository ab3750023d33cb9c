#include "hetfuse/synth.hpp"

#include "hetfuse/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace hetfuse {

using nlohmann::json;

namespace {

std::string_view kind_name(ResponseKind k) { return k == ResponseKind::affine ? "affine" : "tanh_mix"; }

ResponseKind parse_kind(const std::string& s) {
  if (s == "affine") return ResponseKind::affine;
  if (s == "tanh_mix") return ResponseKind::tanh_mix;
  fail(ErrorKind::Parse, "unknown response kind '" + s + "'");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<std::string> default_labels(std::size_t k) {
  if (k == 2) return {"alert", "fatigued"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back("level" + std::to_string(i));
  return out;
}

double lookup(const std::map<std::string, double>& m, const std::string& key, double fallback) {
  auto it = m.find(key);
  return it == m.end() ? fallback : it->second;
}

}  // namespace

void check(const SynthConfig& cfg) {
  require(cfg.label_count >= 2, ErrorKind::InvalidArgument, "synth: label_count must be >= 2");
  require(cfg.persistence > 0.0 && cfg.persistence <= 1.0, ErrorKind::InvalidArgument, "synth: persistence must lie in (0, 1]");
  require(cfg.rate > 0.0, ErrorKind::InvalidArgument, "synth: rate must be positive");
  require(!cfg.channels.empty(), ErrorKind::InvalidArgument, "synth: no channels");
  require(!cfg.domains.empty(), ErrorKind::InvalidLayout, "synth: no domains");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    const auto& c = cfg.channels[i];
    require(c.noise_std > 0.0, ErrorKind::InvalidArgument, "synth: channel " + c.name + " needs noise_std > 0");
    for (const auto& [other, w] : c.mix) {
      (void)w;
      require(index.contains(other), ErrorKind::InvalidArgument,
              "synth: channel " + c.name + " mixes " + other + ", which is not an earlier channel");
    }
    require(index.emplace(c.name, i).second, ErrorKind::InvalidArgument, "synth: duplicate channel " + c.name);
  }
  std::set<std::string> exposed;
  const std::set<std::string> target(cfg.domains.front().channels.begin(), cfg.domains.front().channels.end());
  std::set<std::string> ids;
  for (const auto& d : cfg.domains) {
    require(ids.insert(d.id).second, ErrorKind::InvalidLayout, "synth: duplicate domain id " + d.id);
    require(!d.channels.empty(), ErrorKind::InvalidLayout, "synth: domain " + d.id + " exposes no channel");
    bool shares = false;
    for (const auto& n : d.channels) {
      require(index.contains(n), ErrorKind::InvalidLayout, "synth: domain " + d.id + " exposes unknown channel " + n);
      exposed.insert(n);
      shares = shares || target.contains(n);
    }
    require(shares, ErrorKind::InvalidLayout, "synth: domain " + d.id + " shares no channel with the target");
    require(d.subjects.value_or(cfg.subjects) >= 1 && d.block_length.value_or(cfg.block_length) >= 1,
            ErrorKind::InvalidArgument, "synth: domain " + d.id + " needs subjects and block_length >= 1");
  }
  for (const auto& c : cfg.channels) {
    require(exposed.contains(c.name), ErrorKind::InvalidLayout, "synth: channel " + c.name + " is exposed by no domain");
  }
}

MultiDomain generate_multidomain(const SynthConfig& cfg) {
  check(cfg);
  const std::size_t C = cfg.channels.size();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < C; ++i) index[cfg.channels[i].name] = i;
  const auto labels = default_labels(cfg.label_count);

  auto make_schema = [&](const std::vector<std::string>& names) {
    std::vector<Channel> cs;
    for (const auto& n : names) cs.push_back(Channel{n, cfg.channels[index[n]].modality, cfg.rate, {}});
    return ChannelSchema(std::move(cs));
  };

  MultiDomain out;
  for (std::size_t d = 0; d < cfg.domains.size(); ++d) {
    const auto& layout = cfg.domains[d];
    std::mt19937_64 rng(mix_seed(cfg.seed, d));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> first_label(0, static_cast<int>(cfg.label_count) - 1);
    std::uniform_int_distribution<int> other_label(1, static_cast<int>(cfg.label_count) - 1);
    std::normal_distribution<double> noise(0.0, 1.0);

    std::vector<std::string> hidden;
    for (const auto& c : cfg.channels) {
      if (std::find(layout.channels.begin(), layout.channels.end(), c.name) == layout.channels.end()) hidden.push_back(c.name);
    }

    SensorDataset ds;
    ds.domain_id = layout.id;
    ds.schema = make_schema(layout.channels);
    ds.label_set = labels;
    ds.rate = cfg.rate;
    SensorDataset truth;
    const bool is_target = d == 0;
    if (is_target) {
      truth.domain_id = layout.id + "_hidden";
      truth.schema = make_schema(hidden);
      truth.label_set = labels;
      truth.rate = cfg.rate;
    }

    const std::size_t subjects = layout.subjects.value_or(cfg.subjects);
    const std::size_t T = layout.block_length.value_or(cfg.block_length);
    std::vector<double> value(C);
    for (std::size_t s = 0; s < subjects; ++s) {
      Block all;
      all.subject_id = layout.id + "_s" + std::to_string(s);
      all.samples.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(C));
      all.labels.resize(T);
      all.origin = {s, 0};
      int y = first_label(rng);
      for (std::size_t t = 0; t < T; ++t) {
        if (t > 0 && unit(rng) >= cfg.persistence) {
          y = (y + other_label(rng)) % static_cast<int>(cfg.label_count);
        }
        all.labels[t] = y;
        for (std::size_t c = 0; c < C; ++c) {
          const auto& spec = cfg.channels[c];
          double v = spec.offset + spec.slope * y;
          for (const auto& [other, w] : spec.mix) {
            const double src = value[index[other]];
            v += w * (spec.kind == ResponseKind::affine ? src : std::tanh(src));
          }
          v += spec.noise_std * noise(rng);
          value[c] = v;
        }
        for (std::size_t c = 0; c < C; ++c) {
          const auto& name = cfg.channels[c].name;
          all.samples(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) =
              lookup(layout.gain, name, 1.0) * value[c] + lookup(layout.offset, name, 0.0);
        }
      }
      auto carve = [&](const std::vector<std::string>& names) {
        Block b;
        b.subject_id = all.subject_id;
        b.labels = all.labels;
        b.origin = all.origin;
        b.samples.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(names.size()));
        for (std::size_t k = 0; k < names.size(); ++k) {
          b.samples.col(static_cast<Eigen::Index>(k)) = all.samples.col(static_cast<Eigen::Index>(index[names[k]]));
        }
        return b;
      };
      ds.blocks.push_back(carve(layout.channels));
      if (is_target) truth.blocks.push_back(carve(hidden));
    }
    if (is_target) {
      out.target = std::move(ds);
      out.hidden_truth = std::move(truth);
    } else {
      out.sources.push_back(std::move(ds));
    }
  }
  return out;
}

double oracle_bayes_accuracy(const SynthConfig& cfg, std::size_t window, const std::optional<std::vector<std::string>>& channels) {
  check(cfg);
  require(window >= 1, ErrorKind::InvalidArgument, "oracle: window must be >= 1");
  const auto C = static_cast<Eigen::Index>(cfg.channels.size());
  std::map<std::string, Eigen::Index> index;
  for (Eigen::Index i = 0; i < C; ++i) index[cfg.channels[static_cast<std::size_t>(i)].name] = i;
  Matrix M = Matrix::Zero(C, C);
  Vector beta(C);
  Vector var(C);
  for (Eigen::Index i = 0; i < C; ++i) {
    const auto& c = cfg.channels[static_cast<std::size_t>(i)];
    if (c.kind != ResponseKind::affine) {
      fail(ErrorKind::UnsupportedResponse, "oracle: channel " + c.name + " has a non-affine response");
    }
    beta(i) = c.slope;
    var(i) = c.noise_std * c.noise_std;
    for (const auto& [other, w] : c.mix) M(i, index[other]) += w;
  }
  // x = (I - M)^-1 (offset + beta y + e): mean step b per label, covariance S.
  const Matrix A = (Matrix::Identity(C, C) - M).inverse();
  const Vector b = A * beta;
  const Matrix S = A * var.asDiagonal() * A.transpose();

  const auto names = channels.value_or(cfg.domains.front().channels);
  std::vector<Eigen::Index> idx;
  for (const auto& n : names) {
    auto it = index.find(n);
    require(it != index.end(), ErrorKind::UnknownChannel, "oracle: unknown channel " + n);
    idx.push_back(it->second);
  }
  const auto k = static_cast<Eigen::Index>(idx.size());
  Vector bs(k);
  Matrix Ss(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    bs(i) = b(idx[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < k; ++j) Ss(i, j) = S(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  // Per-step Mahalanobis separation of the window mean; device gains and
  // offsets are invertible per channel and leave it unchanged.
  const double delta = std::sqrt(static_cast<double>(window) * bs.dot(Ss.ldlt().solve(bs)));
  const double K = static_cast<double>(cfg.label_count);
  const double edge = 0.5 * std::erfc(-(delta / 2.0) / std::sqrt(2.0));
  return (2.0 * edge + (K - 2.0) * (2.0 * edge - 1.0)) / K;
}

// --- JSON ------------------------------------------------------------------

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig cfg;
  try {
    cfg.label_count = j.value("label_count", cfg.label_count);
    cfg.subjects = j.value("subjects", cfg.subjects);
    cfg.block_length = j.value("block_length", cfg.block_length);
    cfg.persistence = j.value("persistence", cfg.persistence);
    cfg.rate = j.value("rate", cfg.rate);
    cfg.seed = j.value("seed", cfg.seed);
    for (const auto& c : j.at("channels")) {
      ChannelSpec s;
      s.name = c.at("name").get<std::string>();
      s.modality = parse_modality(c.value("modality", std::string("OTHER")));
      s.offset = c.value("offset", 0.0);
      s.slope = c.value("slope", 1.0);
      s.noise_std = c.value("noise_std", 1.0);
      s.mix = c.value("mix", std::map<std::string, double>{});
      s.kind = parse_kind(c.value("response", std::string("affine")));
      cfg.channels.push_back(std::move(s));
    }
    for (const auto& d : j.at("domains")) {
      DomainLayout l;
      l.id = d.at("id").get<std::string>();
      l.channels = d.at("channels").get<std::vector<std::string>>();
      if (d.contains("subjects")) l.subjects = d["subjects"].get<std::size_t>();
      if (d.contains("block_length")) l.block_length = d["block_length"].get<std::size_t>();
      l.gain = d.value("gain", std::map<std::string, double>{});
      l.offset = d.value("offset", std::map<std::string, double>{});
      cfg.domains.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("synth config: ") + e.what());
  }
  check(cfg);
  return cfg;
}

json to_json(const SynthConfig& cfg) {
  json j;
  j["label_count"] = cfg.label_count;
  j["subjects"] = cfg.subjects;
  j["block_length"] = cfg.block_length;
  j["persistence"] = cfg.persistence;
  j["rate"] = cfg.rate;
  j["seed"] = cfg.seed;
  j["channels"] = json::array();
  for (const auto& c : cfg.channels) {
    j["channels"].push_back({{"name", c.name},
                             {"modality", to_string(c.modality)},
                             {"offset", c.offset},
                             {"slope", c.slope},
                             {"noise_std", c.noise_std},
                             {"mix", c.mix},
                             {"response", kind_name(c.kind)}});
  }
  j["domains"] = json::array();
  for (const auto& d : cfg.domains) {
    json dj{{"id", d.id}, {"channels", d.channels}, {"gain", d.gain}, {"offset", d.offset}};
    if (d.subjects) dj["subjects"] = *d.subjects;
    if (d.block_length) dj["block_length"] = *d.block_length;
    j["domains"].push_back(std::move(dj));
  }
  return j;
}

}  // namespace hetfuse
