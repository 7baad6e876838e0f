#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fate/common.hpp"

namespace fate {

enum class ColumnKind { categorical, continuous, label };

struct RawColumn {
  std::string name;
  ColumnKind kind = ColumnKind::categorical;
};

// Declares the raw table layout: which columns are categorical, continuous,
// or the (single) label, plus the bucket count for continuous discretization.
struct RawSchema {
  std::vector<RawColumn> columns;
  size_t n_buckets = 10;

  void validate() const {
    if (n_buckets < 2) throw ConfigError("schema: n_buckets must be >= 2");
    size_t labels = 0, others = 0;
    for (const auto& c : columns)
      (c.kind == ColumnKind::label ? labels : others)++;
    if (labels != 1) throw ConfigError("schema: exactly one label column required");
    if (others == 0) throw ConfigError("schema: at least one non-label column required");
  }

  size_t label_index() const {
    for (size_t i = 0; i < columns.size(); ++i)
      if (columns[i].kind == ColumnKind::label) return i;
    throw ConfigError("schema: no label column");
  }
};

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// CSV with a header row, comma separated, no quoting (the datasets in scope
// never embed commas in values).
inline RawTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open csv: " + path);
  RawTable t;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.eof()) break;
    auto fields = detail::split_csv_line(line);
    if (line_no == 1) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw DataError("csv " + path + ": line " + std::to_string(line_no) +
                      " has " + std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw DataError("csv " + path + ": missing header row");
  if (t.rows.empty()) throw DataError("csv " + path + ": empty table");
  return t;
}

// Sidecar schema file, one line per column: `column_name = categorical|continuous|label`.
// An optional `n_buckets = <int>` line overrides the bucket count.
inline RawSchema read_schema(const std::string& path,
                             const std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema: " + path);
  std::unordered_map<std::string, ColumnKind> kinds;
  size_t n_buckets = 10;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("schema " + path + ": line " + std::to_string(line_no) +
                        " is not `name = kind`");
    std::string name = detail::trim(s.substr(0, eq));
    std::string kind = detail::trim(s.substr(eq + 1));
    if (name == "n_buckets") {
      n_buckets = static_cast<size_t>(std::stoul(kind));
      continue;
    }
    if (kind == "categorical") kinds[name] = ColumnKind::categorical;
    else if (kind == "continuous") kinds[name] = ColumnKind::continuous;
    else if (kind == "label") kinds[name] = ColumnKind::label;
    else
      throw ConfigError("schema " + path + ": unknown kind `" + kind + "` at line " +
                        std::to_string(line_no));
  }
  RawSchema schema;
  schema.n_buckets = n_buckets;
  for (const auto& h : header) {
    auto it = kinds.find(h);
    if (it == kinds.end())
      throw ConfigError("schema " + path + ": column `" + h + "` not declared");
    schema.columns.push_back({h, it->second});
  }
  schema.validate();
  return schema;
}

// Standardize to zero mean / unit standard deviation, then equal-width buckets
// spanning [min, max] of the standardized values. The maximum maps to the last
// bucket; a constant column maps everything to bucket 0.
struct ContinuousBuckets {
  double mean = 0.0, stddev = 1.0;
  double lo = 0.0, hi = 0.0;  // standardized range observed at fit time
  size_t n_buckets = 10;

  size_t bucket_of(double v) const {
    if (!std::isfinite(v)) throw DataError("discretize: non-finite value");
    if (hi <= lo) return 0;
    double z = (v - mean) / stddev;
    if (z <= lo) return 0;
    if (z >= hi) return n_buckets - 1;
    auto b = static_cast<size_t>((z - lo) / (hi - lo) * static_cast<double>(n_buckets));
    return std::min(b, n_buckets - 1);
  }
};

inline ContinuousBuckets fit_buckets(const std::vector<double>& values, size_t n_buckets) {
  if (values.empty()) throw DataError("discretize: empty value list");
  ContinuousBuckets b;
  b.n_buckets = n_buckets;
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError("discretize: non-finite value");
    sum += v;
  }
  b.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - b.mean) * (v - b.mean);
  double sd = std::sqrt(ss / static_cast<double>(values.size()));
  b.stddev = sd > 0.0 ? sd : 1.0;
  b.lo = (values[0] - b.mean) / b.stddev;
  b.hi = b.lo;
  for (double v : values) {
    double z = (v - b.mean) / b.stddev;
    b.lo = std::min(b.lo, z);
    b.hi = std::max(b.hi, z);
  }
  return b;
}

inline std::vector<size_t> discretize_continuous(const std::vector<double>& values,
                                                 size_t n_buckets) {
  auto b = fit_buckets(values, n_buckets);
  std::vector<size_t> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(b.bucket_of(v));
  return out;
}

// Collapses all values of one raw-feature block whose occurrence count is
// below min_count onto a single shared local index. Survivors keep distinct
// indices in their original order.
struct RareRemap {
  std::vector<size_t> new_index;        // old local index -> new local index
  size_t new_size = 0;
  std::optional<size_t> grouped_index;  // shared index, if any value was rare
};

inline RareRemap group_rare_features(const std::vector<size_t>& counts,
                                     size_t min_count) {
  RareRemap remap;
  remap.new_index.resize(counts.size());
  size_t next = 0;
  for (size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] >= min_count) {
      remap.new_index[i] = next++;
    }
  }
  bool any_rare = false;
  for (size_t c : counts)
    if (c < min_count) any_rare = true;
  if (any_rare) {
    remap.grouped_index = next;
    for (size_t i = 0; i < counts.size(); ++i)
      if (counts[i] < min_count) remap.new_index[i] = next;
    ++next;
  }
  remap.new_size = next;
  return remap;
}

// Maps (raw feature, raw value) pairs to contiguous global 0-1 feature
// indices. Indices [0, frozen_size) are the training vocabulary; encoding
// test rows may allocate fresh indices past it (feature-space expansion).
class FeatureVocabulary {
 public:
  struct Block {
    std::string raw_name;
    ColumnKind kind = ColumnKind::categorical;
    size_t offset = 0;
    size_t size = 0;
    std::map<std::string, size_t> value_to_local;  // categorical, insertion-ordered externally
    std::vector<std::string> local_to_value;
    ContinuousBuckets buckets;                     // continuous only
    std::optional<size_t> rare_local;              // shared rare index, if grouping applied
  };

  size_t raw_count() const { return blocks_.size(); }
  size_t total() const { return total_; }
  size_t frozen_size() const { return frozen_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  size_t n_classes() const { return class_names_.size(); }

  // Fit on a table: one block per non-label column. Categorical block sizes
  // are the number of distinct observed values (after optional rare grouping,
  // threshold min_count when > 0); continuous block sizes equal n_buckets.
  static FeatureVocabulary build(const RawTable& table, const RawSchema& schema,
                                 const std::vector<size_t>& fit_rows,
                                 size_t rare_min_count = 0) {
    schema.validate();
    if (table.rows.empty()) throw DataError("build_vocabulary: empty table");
    for (const auto& r : table.rows)
      if (r.size() != schema.columns.size())
        throw DataError("build_vocabulary: row with wrong arity");
    FeatureVocabulary v;
    const size_t label_col = schema.label_index();
    for (size_t col = 0; col < schema.columns.size(); ++col) {
      const auto& sc = schema.columns[col];
      if (sc.kind == ColumnKind::label) continue;
      Block b;
      b.raw_name = sc.name;
      b.kind = sc.kind;
      b.offset = v.total_;
      if (sc.kind == ColumnKind::continuous) {
        std::vector<double> vals;
        vals.reserve(fit_rows.size());
        for (size_t r : fit_rows) vals.push_back(parse_double(table.rows[r][col], sc.name));
        b.buckets = fit_buckets(vals, schema.n_buckets);
        b.size = schema.n_buckets;
        for (size_t i = 0; i < b.size; ++i)
          b.local_to_value.push_back("bucket" + std::to_string(i));
      } else {
        // values ordered by first appearance
        std::vector<std::string> order;
        std::unordered_map<std::string, size_t> count;
        for (size_t r : fit_rows) {
          const std::string& val = table.rows[r][col];
          if (val.empty()) throw DataError("build_vocabulary: missing value in column " + sc.name);
          auto it = count.find(val);
          if (it == count.end()) {
            count.emplace(val, 1);
            order.push_back(val);
          } else {
            ++it->second;
          }
        }
        if (rare_min_count > 0) {
          std::vector<size_t> counts;
          counts.reserve(order.size());
          for (const auto& val : order) counts.push_back(count[val]);
          RareRemap remap = group_rare_features(counts, rare_min_count);
          b.size = remap.new_size;
          b.local_to_value.assign(remap.new_size, "");
          for (size_t i = 0; i < order.size(); ++i) {
            b.value_to_local[order[i]] = remap.new_index[i];
            if (!remap.grouped_index || remap.new_index[i] != *remap.grouped_index)
              b.local_to_value[remap.new_index[i]] = order[i];
          }
          if (remap.grouped_index) {
            b.rare_local = *remap.grouped_index;
            b.local_to_value[*remap.grouped_index] = "__rare__";
          }
        } else {
          b.size = order.size();
          for (size_t i = 0; i < order.size(); ++i) {
            b.value_to_local[order[i]] = i;
            b.local_to_value.push_back(order[i]);
          }
        }
      }
      v.total_ += b.size;
      v.blocks_.push_back(std::move(b));
    }
    // label classes, ordered by first appearance over the fit rows
    std::unordered_map<std::string, size_t> seen;
    for (size_t r : fit_rows) {
      const std::string& val = table.rows[r][label_col];
      if (val.empty()) throw DataError("build_vocabulary: missing label value");
      if (seen.emplace(val, v.class_names_.size()).second)
        v.class_names_.push_back(val);
    }
    v.frozen_ = v.total_;
    return v;
  }

  static FeatureVocabulary build(const RawTable& table, const RawSchema& schema,
                                 size_t rare_min_count = 0) {
    std::vector<size_t> all(table.rows.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    return build(table, schema, all, rare_min_count);
  }

  // Encode one raw row into its sorted global index list (exactly one index
  // per block). When expand is false an unseen categorical value is an error;
  // when true it allocates a fresh global index >= frozen_size(). Existing
  // assignments are never mutated.
  std::vector<size_t> encode_row(const std::vector<std::string>& row,
                                 const RawSchema& schema, bool expand) {
    std::vector<size_t> out;
    out.reserve(blocks_.size());
    size_t bi = 0;
    for (size_t col = 0; col < schema.columns.size(); ++col) {
      const auto& sc = schema.columns[col];
      if (sc.kind == ColumnKind::label) continue;
      Block& b = blocks_[bi++];
      if (sc.kind == ColumnKind::continuous) {
        double v = parse_double(row[col], sc.name);
        out.push_back(b.offset + b.buckets.bucket_of(v));
      } else {
        const std::string& val = row[col];
        auto it = b.value_to_local.find(val);
        if (it != b.value_to_local.end()) {
          out.push_back(b.offset + it->second);
        } else if (b.rare_local) {
          out.push_back(b.offset + *b.rare_local);
        } else if (expand) {
          out.push_back(allocate(b, val));
        } else {
          throw DataError("encode: unseen value `" + val + "` in column " + sc.name);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  int class_of(const std::string& label, bool allow_new = false) {
    for (size_t i = 0; i < class_names_.size(); ++i)
      if (class_names_[i] == label) return static_cast<int>(i);
    if (!allow_new) throw DataError("encode: unseen label `" + label + "`");
    class_names_.push_back(label);
    return static_cast<int>(class_names_.size() - 1);
  }

  // Inverse lookup: global index -> (raw feature name, value-or-bucket text).
  std::pair<std::string, std::string> decode(size_t global_index) const {
    for (const auto& b : blocks_) {
      if (global_index >= b.offset && global_index < b.offset + b.size)
        return {b.raw_name, b.local_to_value[global_index - b.offset]};
    }
    for (const auto& e : expansions_)
      if (e.global == global_index) return {blocks_[e.block].raw_name, e.value};
    throw DataError("decode: index out of range");
  }

  // Versioned text format: header line, then one line per global index.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocabulary: " + path);
    out << "fate_vocab_v1\t" << total_ << "\t" << frozen_ << "\n";
    for (const auto& b : blocks_) {
      for (size_t i = 0; i < b.size; ++i)
        out << b.offset + i << "\t" << b.raw_name << "\t" << b.local_to_value[i] << "\n";
    }
    for (const auto& e : expansions_)
      out << e.global << "\t" << blocks_[e.block].raw_name << "\t" << e.value << "\n";
    out << "# classes";
    for (const auto& c : class_names_) out << "\t" << c;
    out << "\n";
  }

  uint64_t content_hash() const {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const std::string& s) {
      h = fnv1a64(s.data(), s.size(), h);
      h = fnv1a64("\x1f", 1, h);
    };
    mix(std::to_string(frozen_));
    for (const auto& b : blocks_) {
      mix(b.raw_name);
      for (const auto& val : b.local_to_value) mix(val);
    }
    for (const auto& c : class_names_) mix(c);
    return h;
  }

 private:
  struct Expansion {
    size_t block;
    std::string value;
    size_t global;
  };

  static double parse_double(const std::string& s, const std::string& col) {
    try {
      size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw DataError("encode: non-numeric value `" + s + "` in continuous column " + col);
    }
  }

  size_t allocate(Block& b, const std::string& val) {
    size_t g = total_++;
    b.value_to_local[val] = g - b.offset;  // out-of-block local; resolved via expansions_
    size_t bi = static_cast<size_t>(&b - blocks_.data());
    expansions_.push_back({bi, val, g});
    return g;
  }

  std::vector<Block> blocks_;
  std::vector<Expansion> expansions_;
  std::vector<std::string> class_names_;
  size_t total_ = 0;
  size_t frozen_ = 0;
};

// Sparse multi-hot design matrix: per-row sorted global indices plus the class
// index. cols tracks the widest feature space any row touches.
struct EncodedMatrix {
  size_t cols = 0;
  std::vector<std::vector<size_t>> row_indices;
  std::vector<int> labels;

  size_t rows() const { return row_indices.size(); }

  // Rows are kept sorted so results depend only on the index set, never on
  // presentation order.
  void push_row(std::vector<size_t> idx, int label) {
    std::sort(idx.begin(), idx.end());
    for (size_t j : idx) cols = std::max(cols, j + 1);
    row_indices.push_back(std::move(idx));
    labels.push_back(label);
  }

  size_t nnz() const {
    size_t n = 0;
    for (const auto& r : row_indices) n += r.size();
    return n;
  }
};

// Encode selected table rows with a vocabulary. Row order follows `rows`.
inline EncodedMatrix encode_rows(const RawTable& table, const RawSchema& schema,
                                 FeatureVocabulary& vocab,
                                 const std::vector<size_t>& rows, bool expand,
                                 bool allow_new_labels = false) {
  EncodedMatrix m;
  m.cols = vocab.total();
  const size_t label_col = schema.label_index();
  for (size_t r : rows) {
    auto idx = vocab.encode_row(table.rows[r], schema, expand);
    int label = vocab.class_of(table.rows[r][label_col], allow_new_labels);
    m.push_row(std::move(idx), label);
  }
  m.cols = std::max(m.cols, vocab.total());
  return m;
}

inline void save_encoded(const EncodedMatrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write encoded matrix: " + path);
  out << "fate_encoded_v1\t" << m.rows() << "\t" << m.cols << "\n";
  for (size_t i = 0; i < m.rows(); ++i) {
    out << m.labels[i];
    for (size_t j : m.row_indices[i]) out << "\t" << j;
    out << "\n";
  }
}

}  // namespace fate
