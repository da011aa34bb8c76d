#include "adaseq/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace adaseq {

std::vector<size_t> SequenceDataset::split_indices(int split) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<Record> load_pamap2_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path);
  std::vector<Record> records;
  std::string line;
  size_t line_no = 0;
  std::vector<double> values;
  values.reserve(kPamap2Columns);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    values.clear();
    std::istringstream ls(line);
    std::string tok;
    bool has_nan = false;
    while (ls >> tok) {
      if (tok == "NaN" || tok == "nan" || tok == "NAN") {
        has_nan = true;
        values.push_back(std::nan(""));
        continue;
      }
      try {
        size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        values.push_back(v);
      } catch (const std::exception&) {
        throw DataError(path + " line " + std::to_string(line_no) + ": malformed value '" + tok + "'");
      }
    }
    if (values.size() != kPamap2Columns) {
      throw DataError(path + " line " + std::to_string(line_no) + ": expected " +
                      std::to_string(kPamap2Columns) + " columns, got " +
                      std::to_string(values.size()));
    }
    if (has_nan) continue;  // whole-row removal, no interpolation
    Record r;
    r.timestamp = values[0];
    r.activity_id = static_cast<int>(values[1]);
    r.features.assign(values.begin() + 2, values.end());
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<SubjectRecords> load_pamap2(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name.rfind("subject", 0) == 0 && entry.path().extension() == ".dat") {
      files.push_back(entry.path().string());
    }
  }
  if (files.empty()) throw DataError("no subject*.dat files under " + dir);
  std::sort(files.begin(), files.end());
  std::vector<SubjectRecords> subjects;
  for (const auto& f : files) {
    SubjectRecords s;
    std::string stem = fs::path(f).stem().string();
    std::string digits;
    for (char c : stem) {
      if (std::isdigit(static_cast<unsigned char>(c))) digits.push_back(c);
    }
    s.subject_id = digits.empty() ? static_cast<int>(subjects.size()) : std::stoi(digits);
    s.records = load_pamap2_file(f);
    subjects.push_back(std::move(s));
  }
  return subjects;
}

namespace {

// floor(r*n) with a guard against the binary representation of r landing a
// hair under the intended product (e.g. 0.3 * 200).
int transient_quota(double r, int n) {
  return static_cast<int>(std::floor(r * static_cast<double>(n) + 1e-9));
}

}  // namespace

SequenceDataset extract_sequences(const std::vector<SubjectRecords>& subjects, double r, int n,
                                  uint64_t seed, std::vector<std::string>* warnings) {
  if (!(r > 0.0 && r < 1.0)) throw DataError("transient ratio r must lie in (0,1)");
  if (n < 1) throw DataError("sequence length n must be >= 1");
  const int need_t = transient_quota(r, n);
  const int need_a = n - need_t;

  SequenceDataset ds;
  ds.meta.r = r;
  ds.meta.n = n;
  ds.meta.seed = seed;

  Rng rng(seed);
  std::vector<int> present_ids;
  for (const auto& subject : subjects) {
    std::vector<const Record*> transient_pool, active_pool;
    for (const auto& rec : subject.records) {
      (rec.activity_id == 0 ? transient_pool : active_pool).push_back(&rec);
    }
    if (static_cast<int>(transient_pool.size()) < need_t ||
        static_cast<int>(active_pool.size()) < need_a) {
      if (warnings) {
        warnings->push_back("subject " + std::to_string(subject.subject_id) +
                            ": pools too small for one sequence, skipped");
      }
      continue;
    }
    rng.shuffle(transient_pool);
    rng.shuffle(active_pool);
    size_t t_pos = 0, a_pos = 0;
    while (t_pos + need_t <= transient_pool.size() && a_pos + need_a <= active_pool.size()) {
      std::vector<const Record*> chunk;
      chunk.reserve(n);
      for (int i = 0; i < need_t; ++i) chunk.push_back(transient_pool[t_pos + i]);
      for (int i = 0; i < need_a; ++i) chunk.push_back(active_pool[a_pos + i]);
      t_pos += need_t;
      a_pos += need_a;
      std::stable_sort(chunk.begin(), chunk.end(),
                       [](const Record* a, const Record* b) { return a->timestamp < b->timestamp; });
      Sequence seq;
      seq.subject_id = subject.subject_id;
      const int feat = static_cast<int>(chunk.front()->features.size());
      seq.inputs = Tensor(n, feat);
      seq.labels.resize(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < feat; ++j) seq.inputs(i, j) = chunk[i]->features[j];
        seq.labels[i] = chunk[i]->activity_id;  // raw id; remapped below
        present_ids.push_back(chunk[i]->activity_id);
      }
      ds.sequences.push_back(std::move(seq));
    }
  }
  if (ds.sequences.empty()) {
    throw DataError("extract_sequences: no subject has enough records of both kinds");
  }

  // dense remap of the activity ids actually present; 0 stays first
  std::sort(present_ids.begin(), present_ids.end());
  present_ids.erase(std::unique(present_ids.begin(), present_ids.end()), present_ids.end());
  std::map<int, int> remap;
  for (size_t i = 0; i < present_ids.size(); ++i) remap[present_ids[i]] = static_cast<int>(i);
  for (auto& seq : ds.sequences) {
    for (auto& label : seq.labels) label = remap[label];
  }
  ds.meta.class_ids = present_ids;
  ds.meta.feature_dim = ds.sequences.front().inputs.cols;
  return ds;
}

void split_dataset(SequenceDataset& dataset, uint64_t seed) {
  const size_t count = dataset.sequences.size();
  if (count < 10) {
    throw DataError("split_dataset: need at least 10 sequences, have " + std::to_string(count));
  }
  std::vector<size_t> order(count);
  for (size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const size_t n_val = count / 10;
  const size_t n_test = count / 10;
  const size_t n_train = count - n_val - n_test;
  for (size_t i = 0; i < count; ++i) {
    int split = kTrain;
    if (i >= n_train && i < n_train + n_val) split = kValidation;
    if (i >= n_train + n_val) split = kTest;
    dataset.sequences[order[i]].split = split;
  }
}

void standardize(SequenceDataset& dataset) {
  const int feat = dataset.meta.feature_dim;
  std::vector<double> mean(feat, 0.0), var(feat, 0.0);
  int64_t count = 0;
  for (const auto& seq : dataset.sequences) {
    if (seq.split != kTrain) continue;
    for (int i = 0; i < seq.inputs.rows; ++i) {
      for (int j = 0; j < feat; ++j) mean[j] += seq.inputs(i, j);
    }
    count += seq.inputs.rows;
  }
  if (count == 0) throw DataError("standardize: empty training split");
  for (int j = 0; j < feat; ++j) mean[j] /= static_cast<double>(count);
  for (const auto& seq : dataset.sequences) {
    if (seq.split != kTrain) continue;
    for (int i = 0; i < seq.inputs.rows; ++i) {
      for (int j = 0; j < feat; ++j) {
        double d = seq.inputs(i, j) - mean[j];
        var[j] += d * d;
      }
    }
  }
  std::vector<double> sd(feat);
  for (int j = 0; j < feat; ++j) {
    sd[j] = std::sqrt(var[j] / static_cast<double>(count));
    if (sd[j] < 1e-12) sd[j] = 1.0;
  }
  for (auto& seq : dataset.sequences) {
    for (int i = 0; i < seq.inputs.rows; ++i) {
      for (int j = 0; j < feat; ++j) seq.inputs(i, j) = (seq.inputs(i, j) - mean[j]) / sd[j];
    }
  }
}

SequenceDataset synth_generate(double r, int n, int num_sequences, int d_in, int num_classes,
                               uint64_t seed) {
  if (!(r > 0.0 && r < 1.0)) throw DataError("transient ratio r must lie in (0,1)");
  if (n < 1 || num_sequences < 1) throw DataError("synth_generate: need n >= 1 and sequences >= 1");
  if (d_in < 3) throw DataError("synth_generate: need at least 3 features");
  if (num_classes < 2) throw DataError("synth_generate: need at least 2 classes");

  // Transient steps are unstructured sensor chatter: noisier than the
  // in-segment measurement noise but well below the unit signal power, so a
  // full state update on them genuinely degrades the carried context.
  constexpr double kTransientNoiseSd = 0.5;
  constexpr double kActiveNoiseSd = 0.1;
  constexpr double kMeanSegmentLen = 8.0;
  const int active_classes = num_classes - 1;

  SequenceDataset ds;
  ds.meta.r = r;
  ds.meta.n = n;
  ds.meta.seed = seed;
  ds.meta.feature_dim = d_in;
  ds.meta.class_ids.resize(num_classes);
  for (int c = 0; c < num_classes; ++c) ds.meta.class_ids[c] = c;

  // class c keyed by angular frequency; identity is carried by the phase
  // difference between consecutive steps, never by a single frame
  auto omega = [&](int c) {
    if (active_classes == 1) return 0.5 * M_PI;
    return M_PI * (0.25 + 0.5 * static_cast<double>(c - 1) / static_cast<double>(active_classes - 1));
  };

  Rng rng(seed);
  ds.sequences.reserve(num_sequences);
  for (int s = 0; s < num_sequences; ++s) {
    const int quota_t = transient_quota(r, n);
    const int quota_a = n - quota_t;

    // active segments with geometric lengths, then the transient quota
    // scattered into the gaps around them
    std::vector<int> seg_len, seg_class;
    int remaining = quota_a;
    while (remaining > 0) {
      int len = std::min(rng.geometric(kMeanSegmentLen), remaining);
      seg_len.push_back(len);
      seg_class.push_back(1 + static_cast<int>(rng.index(active_classes)));
      remaining -= len;
    }
    const size_t gaps = seg_len.size() + 1;
    std::vector<int> gap_len(gaps, 0);
    for (int i = 0; i < quota_t; ++i) gap_len[rng.index(gaps)]++;

    Sequence seq;
    seq.subject_id = s;
    seq.inputs = Tensor(n, d_in);
    seq.labels.resize(n);
    int t = 0;
    auto emit_transient = [&](int count) {
      for (int i = 0; i < count; ++i, ++t) {
        for (int j = 0; j < d_in; ++j) seq.inputs(t, j) = rng.normal(0.0, kTransientNoiseSd);
        seq.labels[t] = 0;
      }
    };
    for (size_t g = 0; g < seg_len.size(); ++g) {
      emit_transient(gap_len[g]);
      const double w = omega(seg_class[g]);
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      for (int k = 0; k < seg_len[g]; ++k, ++t) {
        const double theta = w * k + phase;
        seq.inputs(t, 0) = 1.0 + rng.normal(0.0, kActiveNoiseSd);
        seq.inputs(t, 1) = std::sin(theta) + rng.normal(0.0, kActiveNoiseSd);
        seq.inputs(t, 2) = std::cos(theta) + rng.normal(0.0, kActiveNoiseSd);
        for (int j = 3; j < d_in; ++j) seq.inputs(t, j) = rng.normal(0.0, kActiveNoiseSd);
        seq.labels[t] = seg_class[g];
      }
    }
    emit_transient(gap_len.back());
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace adaseq
