#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "fate/common.hpp"
#include "fate/encode.hpp"

namespace fate {

// Class-conditional categorical generator: each raw feature votes for the
// instance's class (value = the class's preferred value with a per-feature
// probability, otherwise uniform). Per-feature strengths ramp from vote_lo to
// vote_hi so each additional observed feature still adds signal, and a label
// noise floor caps attainable accuracy.
struct ClassTaskSpec {
  std::string name = "synth";
  size_t n_rows = 1000;
  std::vector<size_t> cardinalities;
  size_t n_classes = 3;
  double vote_lo = 0.25;
  double vote_hi = 0.65;
  double label_noise = 0.08;
  uint64_t seed = 1;
  bool ensure_all_values = true;
};

inline RawTable generate_class_table(const ClassTaskSpec& spec) {
  const size_t d = spec.cardinalities.size();
  if (d == 0) throw ConfigError("generate_class_table: no raw features");
  Rng rule_rng(mix_seed(spec.seed, 0x121e5ull));
  std::vector<std::vector<size_t>> pref(d);  // pref[m][c]
  for (size_t m = 0; m < d; ++m) {
    pref[m].resize(spec.n_classes);
    for (size_t c = 0; c < spec.n_classes; ++c)
      pref[m][c] = rule_rng.index(spec.cardinalities[m]);
  }

  RawTable t;
  for (size_t m = 0; m < d; ++m) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "f%02zu", m);
    t.header.emplace_back(buf);
  }
  t.header.emplace_back("class");

  Rng rng(mix_seed(spec.seed, 0xda7aull));
  t.rows.resize(spec.n_rows);
  std::vector<std::vector<uint8_t>> present(d);
  for (size_t m = 0; m < d; ++m) present[m].assign(spec.cardinalities[m], 0);
  for (size_t i = 0; i < spec.n_rows; ++i) {
    auto& row = t.rows[i];
    row.resize(d + 1);
    const size_t c = rng.index(spec.n_classes);
    for (size_t m = 0; m < d; ++m) {
      const double strength =
          d == 1 ? spec.vote_hi
                 : spec.vote_lo + (spec.vote_hi - spec.vote_lo) *
                                      static_cast<double>(m) / static_cast<double>(d - 1);
      size_t v = rng.uniform() < strength ? pref[m][c] : rng.index(spec.cardinalities[m]);
      present[m][v] = 1;
      row[m] = "v" + std::to_string(v);
    }
    const size_t label = rng.uniform() < spec.label_noise ? rng.index(spec.n_classes) : c;
    row[d] = "c" + std::to_string(label);
  }

  if (spec.ensure_all_values) {
    // stamp any value the sampling missed into a deterministic row so the
    // full-table vocabulary has exactly sum(cardinalities) features
    for (size_t m = 0; m < d; ++m) {
      std::set<size_t> used_rows;
      for (size_t v = 0; v < spec.cardinalities[m]; ++v) {
        if (present[m][v]) continue;
        size_t r = splitmix64(mix_seed(spec.seed, m * 1009 + v)) % spec.n_rows;
        while (used_rows.count(r)) r = (r + 1) % spec.n_rows;
        used_rows.insert(r);
        t.rows[r][m] = "v" + std::to_string(v);
      }
    }
  }
  return t;
}

inline RawSchema class_table_schema(const ClassTaskSpec& spec) {
  RawSchema s;
  for (size_t m = 0; m < spec.cardinalities.size(); ++m) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "f%02zu", m);
    s.columns.push_back({buf, ColumnKind::categorical});
  }
  s.columns.push_back({"class", ColumnKind::label});
  return s;
}

// Shape-matched stand-ins for the two desk-scale UCI tasks: Gene-like
// (3190 x 60 raw, cardinalities 4-5 summing to 287, 3 classes) and Calls-like
// (7195 x 10 raw, cardinalities summing to 219, 10 classes).
inline ClassTaskSpec gene_like_spec(uint64_t seed = 1) {
  ClassTaskSpec spec;
  spec.name = "gene";
  spec.n_rows = 3190;
  spec.n_classes = 3;
  spec.seed = seed;
  for (size_t m = 0; m < 60; ++m) spec.cardinalities.push_back(m < 13 ? 4 : 5);
  spec.vote_lo = 0.18;
  spec.vote_hi = 0.52;
  spec.label_noise = 0.06;
  return spec;
}

inline ClassTaskSpec calls_like_spec(uint64_t seed = 1) {
  ClassTaskSpec spec;
  spec.name = "calls";
  spec.n_rows = 7195;
  spec.n_classes = 10;
  spec.seed = seed;
  spec.cardinalities = {22, 22, 22, 22, 22, 22, 22, 22, 22, 21};  // 219 total
  spec.vote_lo = 0.45;
  spec.vote_hi = 0.85;
  spec.label_noise = 0.03;
  return spec;
}

// Time-ordered binary stream where part of the value universe drifts: stable
// raw features keep a fixed value window, drifting features slide theirs every
// drift_period rows, so later slices are dominated by values absent from any
// early-rows vocabulary. Values carry class signal through their parity, so
// fresh values remain informative and co-occur with the stable (trained) ones.
struct StreamTaskSpec {
  std::string name = "stream";
  size_t n_rows = 100000;
  size_t n_stable = 6;
  size_t n_drift = 6;
  size_t window = 8;
  size_t drift_period = 2000;
  size_t drift_step = 4;
  double stable_strength = 0.30;  // prob a stable value matches the class parity beyond chance
  double drift_strength = 0.85;
  double label_noise = 0.02;
  uint64_t seed = 3;
};

inline RawTable generate_stream_table(const StreamTaskSpec& spec) {
  RawTable t;
  const size_t d = spec.n_stable + spec.n_drift;
  for (size_t m = 0; m < d; ++m) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%s%02zu", m < spec.n_stable ? "s" : "g",
                  m < spec.n_stable ? m : m - spec.n_stable);
    t.header.emplace_back(buf);
  }
  t.header.emplace_back("click");

  Rng rng(mix_seed(spec.seed, 0x57e3ull));
  t.rows.resize(spec.n_rows);
  for (size_t i = 0; i < spec.n_rows; ++i) {
    auto& row = t.rows[i];
    row.resize(d + 1);
    const size_t c = rng.index(2);
    for (size_t m = 0; m < d; ++m) {
      const bool drifting = m >= spec.n_stable;
      const size_t base =
          drifting ? (i / spec.drift_period) * spec.drift_step : 0;
      const double strength = drifting ? spec.drift_strength : spec.stable_strength;
      size_t v;
      if (rng.uniform() < strength) {
        // value with parity c inside the window
        size_t slot = rng.index(spec.window / 2);
        v = base + 2 * slot + c;
      } else {
        v = base + rng.index(spec.window);
      }
      row[m] = "v" + std::to_string(v);
    }
    const size_t label = rng.uniform() < spec.label_noise ? rng.index(2) : c;
    row[d] = label ? "1" : "0";
  }
  return t;
}

inline RawSchema stream_table_schema(const StreamTaskSpec& spec) {
  RawSchema s;
  const size_t d = spec.n_stable + spec.n_drift;
  for (size_t m = 0; m < d; ++m) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%s%02zu", m < spec.n_stable ? "s" : "g",
                  m < spec.n_stable ? m : m - spec.n_stable);
    s.columns.push_back({buf, ColumnKind::categorical});
  }
  s.columns.push_back({"click", ColumnKind::label});
  return s;
}

inline void write_csv(const RawTable& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write csv: " + path);
  for (size_t j = 0; j < t.header.size(); ++j)
    out << (j ? "," : "") << t.header[j];
  out << "\n";
  for (const auto& row : t.rows) {
    for (size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << row[j];
    out << "\n";
  }
}

inline void write_schema(const RawSchema& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write schema: " + path);
  for (const auto& c : s.columns) {
    const char* kind = c.kind == ColumnKind::label ? "label"
                       : c.kind == ColumnKind::continuous ? "continuous"
                                                          : "categorical";
    out << c.name << " = " << kind << "\n";
  }
  if (s.n_buckets != 10) out << "n_buckets = " << s.n_buckets << "\n";
}

}  // namespace fate
