#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adaseq/tensor.hpp"

namespace adaseq {

constexpr int kPamap2Features = 52;
constexpr int kPamap2Columns = 54;  // timestamp, activity id, 52 sensor features

// One sensor record after NaN filtering. activity_id 0 marks a transient
// state between activities.
struct Record {
  double timestamp = 0.0;
  int activity_id = 0;
  std::vector<double> features;
};

struct SubjectRecords {
  int subject_id = 0;
  std::vector<Record> records;
};

enum Split : int { kTrain = 0, kValidation = 1, kTest = 2, kUnassigned = -1 };

struct Sequence {
  Tensor inputs;            // n x feature_dim
  std::vector<int> labels;  // dense ids, 0 = transient
  int subject_id = 0;
  int split = kUnassigned;
};

struct DatasetMeta {
  double r = 0.0;
  int n = 0;
  uint64_t seed = 0;
  int feature_dim = 0;
  std::vector<int> class_ids;  // original activity ids, index = dense label
};

struct SequenceDataset {
  std::vector<Sequence> sequences;
  DatasetMeta meta;

  int num_classes() const { return static_cast<int>(meta.class_ids.size()); }
  std::vector<size_t> split_indices(int split) const;
};

// Reads one per-subject whitespace-separated file (54 columns, "NaN" for
// missing values); rows containing any NaN are dropped.
std::vector<Record> load_pamap2_file(const std::string& path);

// Loads every subject*.dat under dir, sorted by filename.
std::vector<SubjectRecords> load_pamap2(const std::string& dir);

// Per subject: partition records into transient / non-transient pools,
// sample floor(r*n) transient and the rest non-transient points per
// sequence with the seeded generator, sort chronologically, and emit
// length-n sequences until a pool runs dry. Subjects too small for one
// sequence are skipped with a warning.
SequenceDataset extract_sequences(const std::vector<SubjectRecords>& subjects, double r, int n,
                                  uint64_t seed, std::vector<std::string>* warnings = nullptr);

// Sequence-level shuffled 80/10/10 split.
void split_dataset(SequenceDataset& dataset, uint64_t seed);

// Per-feature standardization; statistics come from the training split only.
void standardize(SequenceDataset& dataset);

// Regime-switching synthetic source: transient steps (label 0) are
// low-variance noise; active segments of geometric mean length 8 carry a
// class whose identity is decodable only from the phase difference between
// consecutive feature vectors. Each sequence has exactly floor(r*n)
// transient steps.
SequenceDataset synth_generate(double r, int n, int num_sequences, int d_in, int num_classes,
                               uint64_t seed);

void save_cache(const std::string& path, const SequenceDataset& dataset);
SequenceDataset load_cache(const std::string& path);

}  // namespace adaseq
