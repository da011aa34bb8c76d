#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <sstream>

#include <doctest.h>

#include "adaseq/data.hpp"
#include "adaseq/rng.hpp"

using namespace adaseq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("adaseq_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string record_line(double ts, int activity, double base, bool nan_feature = false) {
  std::ostringstream line;
  line << ts << ' ' << activity;
  for (int j = 0; j < kPamap2Features; ++j) {
    if (nan_feature && j == 3) {
      line << " NaN";
    } else {
      line << ' ' << base + 0.01 * j;
    }
  }
  return line.str();
}

// fixture corpus: interleaved transient (activity 0) and active records with
// strictly increasing timestamps
void write_subject_file(const fs::path& path, int transient_rows, int active_rows, int nan_rows,
                        uint64_t seed) {
  std::ofstream out(path);
  Rng rng(seed);
  int t_left = transient_rows, a_left = active_rows, nan_left = nan_rows;
  double ts = 0.0;
  const int activities[] = {1, 2, 4};
  while (t_left > 0 || a_left > 0 || nan_left > 0) {
    ts += 0.01;
    if (nan_left > 0 && rng.uniform01() < 0.1) {
      out << record_line(ts, 1, rng.uniform(-1, 1), true) << '\n';
      --nan_left;
      continue;
    }
    if (t_left > 0 && (a_left == 0 || rng.uniform01() < 0.5)) {
      out << record_line(ts, 0, rng.normal(0.0, 0.2)) << '\n';
      --t_left;
    } else if (a_left > 0) {
      out << record_line(ts, activities[rng.index(3)], rng.normal(2.0, 0.5)) << '\n';
      --a_left;
    }
  }
}

}  // namespace

TEST_CASE("loader drops NaN rows") {
  TempDir dir("nan");
  fs::path file = dir.path / "subject101.dat";
  {
    std::ofstream out(file);
    out << record_line(1.0, 1, 0.5) << '\n';
    out << record_line(2.0, 1, 0.5, true) << '\n';
    out << record_line(3.0, 2, 0.7) << '\n';
  }
  std::vector<Record> records = load_pamap2_file(file.string());
  REQUIRE(records.size() == 2);
  CHECK(records[0].timestamp == 1.0);
  CHECK(records[1].timestamp == 3.0);
  for (const Record& r : records) {
    CHECK(r.features.size() == kPamap2Features);
    for (double v : r.features) CHECK(std::isfinite(v));
  }
}

TEST_CASE("loader keeps transient rows, labeled 0") {
  TempDir dir("transient");
  fs::path file = dir.path / "subject101.dat";
  {
    std::ofstream out(file);
    out << record_line(1.0, 0, 0.1) << '\n';
    out << record_line(2.0, 5, 0.9) << '\n';
  }
  std::vector<Record> records = load_pamap2_file(file.string());
  REQUIRE(records.size() == 2);
  CHECK(records[0].activity_id == 0);
  CHECK(records[1].activity_id == 5);
}

TEST_CASE("loader reports malformed rows with line numbers") {
  TempDir dir("malformed");
  fs::path file = dir.path / "subject101.dat";
  {
    std::ofstream out(file);
    out << record_line(1.0, 1, 0.5) << '\n';
    out << "1.5 1 only three cols\n";
  }
  try {
    load_pamap2_file(file.string());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("loader names missing files") {
  try {
    load_pamap2_file("/nonexistent/subject999.dat");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("subject999.dat") != std::string::npos);
  }
  CHECK_THROWS_AS(load_pamap2("/nonexistent_dir"), DataError);
}

TEST_CASE("extract_sequences honors the exact transient quota") {
  TempDir dir("extract");
  write_subject_file(dir.path / "subject101.dat", 500, 500, 20, 1);
  write_subject_file(dir.path / "subject102.dat", 500, 500, 20, 2);
  std::vector<SubjectRecords> subjects = load_pamap2(dir.path.string());
  REQUIRE(subjects.size() == 2);

  SequenceDataset ds = extract_sequences(subjects, 0.5, 100, 7);
  CHECK(ds.sequences.size() >= 10);
  for (const Sequence& seq : ds.sequences) {
    REQUIRE(seq.labels.size() == 100);
    int transient = 0;
    for (int label : seq.labels) {
      if (label == 0) ++transient;
    }
    CHECK(transient == 50);
  }
  // class ids are a dense remap with 0 first
  REQUIRE(ds.meta.class_ids.size() == 4);
  CHECK(ds.meta.class_ids[0] == 0);
  CHECK(ds.meta.class_ids[1] == 1);
  CHECK(ds.meta.class_ids[2] == 2);
  CHECK(ds.meta.class_ids[3] == 4);
  for (const Sequence& seq : ds.sequences) {
    for (int label : seq.labels) {
      CHECK(label >= 0);
      CHECK(label < 4);
    }
  }
}

TEST_CASE("extracted sequences are chronologically sorted per subject") {
  TempDir dir("chrono");
  // feature column 0 mirrors the timestamp (base = ts), so sorting is
  // observable in the extracted inputs
  {
    std::ofstream out(dir.path / "subject101.dat");
    Rng rng(3);
    double ts = 0.0;
    for (int i = 0; i < 800; ++i) {
      ts += 0.01;
      int activity = rng.uniform01() < 0.5 ? 0 : 1 + static_cast<int>(rng.index(3));
      out << record_line(ts, activity, ts) << '\n';
    }
  }
  SequenceDataset ds = extract_sequences(load_pamap2(dir.path.string()), 0.4, 50, 9);
  CHECK(!ds.sequences.empty());
  for (const Sequence& seq : ds.sequences) {
    REQUIRE(seq.inputs.rows == 50);
    for (int i = 1; i < seq.inputs.rows; ++i) {
      CHECK(seq.inputs(i, 0) >= seq.inputs(i - 1, 0));
    }
  }
}

TEST_CASE("extract_sequences quota of zero transients") {
  TempDir dir("zeroquota");
  write_subject_file(dir.path / "subject101.dat", 30, 400, 0, 4);
  SequenceDataset ds = extract_sequences(load_pamap2(dir.path.string()), 0.05, 10, 9);
  // floor(0.05*10) = 0: no step maps back to activity id 0
  CHECK(!ds.sequences.empty());
  for (int id : ds.meta.class_ids) CHECK(id != 0);
  for (const Sequence& seq : ds.sequences) {
    for (int label : seq.labels) CHECK(ds.meta.class_ids[label] != 0);
  }
}

TEST_CASE("extract_sequences is deterministic") {
  TempDir dir("det");
  write_subject_file(dir.path / "subject101.dat", 300, 300, 10, 5);
  auto subjects = load_pamap2(dir.path.string());
  SequenceDataset a = extract_sequences(subjects, 0.5, 40, 11);
  SequenceDataset b = extract_sequences(subjects, 0.5, 40, 11);
  REQUIRE(a.sequences.size() == b.sequences.size());
  for (size_t i = 0; i < a.sequences.size(); ++i) {
    CHECK(a.sequences[i].inputs.data == b.sequences[i].inputs.data);
    CHECK(a.sequences[i].labels == b.sequences[i].labels);
  }
}

TEST_CASE("extract_sequences skips subjects with too few records") {
  TempDir dir("skip");
  write_subject_file(dir.path / "subject101.dat", 2, 2, 0, 6);   // too small
  write_subject_file(dir.path / "subject102.dat", 300, 300, 0, 7);
  std::vector<std::string> warnings;
  SequenceDataset ds = extract_sequences(load_pamap2(dir.path.string()), 0.5, 40, 13, &warnings);
  CHECK(!ds.sequences.empty());
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("101") != std::string::npos);
  for (const Sequence& seq : ds.sequences) CHECK(seq.subject_id == 102);
}

TEST_CASE("split proportions: 100 sequences give 80/10/10") {
  SequenceDataset ds = synth_generate(0.5, 10, 100, 4, 3, 21);
  split_dataset(ds, 5);
  CHECK(ds.split_indices(kTrain).size() == 80);
  CHECK(ds.split_indices(kValidation).size() == 10);
  CHECK(ds.split_indices(kTest).size() == 10);
}

TEST_CASE("split proportions: 10 sequences give 8/1/1") {
  SequenceDataset ds = synth_generate(0.5, 10, 10, 4, 3, 22);
  split_dataset(ds, 5);
  CHECK(ds.split_indices(kTrain).size() == 8);
  CHECK(ds.split_indices(kValidation).size() == 1);
  CHECK(ds.split_indices(kTest).size() == 1);
}

TEST_CASE("split rejects fewer than 10 sequences and is deterministic") {
  SequenceDataset small = synth_generate(0.5, 10, 9, 4, 3, 23);
  CHECK_THROWS_AS(split_dataset(small, 1), DataError);

  SequenceDataset a = synth_generate(0.5, 10, 50, 4, 3, 24);
  SequenceDataset b = synth_generate(0.5, 10, 50, 4, 3, 24);
  split_dataset(a, 9);
  split_dataset(b, 9);
  for (size_t i = 0; i < a.sequences.size(); ++i) {
    CHECK(a.sequences[i].split == b.sequences[i].split);
  }
}

TEST_CASE("standardization statistics come from the training split") {
  TempDir dir("std");
  write_subject_file(dir.path / "subject101.dat", 600, 600, 0, 8);
  SequenceDataset ds = extract_sequences(load_pamap2(dir.path.string()), 0.5, 50, 31);
  split_dataset(ds, 31);
  standardize(ds);
  const int feat = ds.meta.feature_dim;
  std::vector<double> mean(feat, 0.0);
  int64_t count = 0;
  for (const Sequence& seq : ds.sequences) {
    if (seq.split != kTrain) continue;
    for (int i = 0; i < seq.inputs.rows; ++i) {
      for (int j = 0; j < feat; ++j) mean[j] += seq.inputs(i, j);
    }
    count += seq.inputs.rows;
  }
  for (int j = 0; j < feat; ++j) CHECK(std::abs(mean[j] / count) < 1e-10);
}

TEST_CASE("synthetic generator hits the transient ratio exactly per sequence") {
  for (double r : {0.1, 0.5, 0.9}) {
    SequenceDataset ds = synth_generate(r, 100, 100, 6, 5, 37);
    int64_t transient = 0, total = 0;
    for (const Sequence& seq : ds.sequences) {
      int seq_transient = 0;
      for (int label : seq.labels) {
        if (label == 0) ++seq_transient;
      }
      CHECK(seq_transient == static_cast<int>(std::floor(r * 100 + 1e-9)));
      transient += seq_transient;
      total += 100;
    }
    double realized = static_cast<double>(transient) / total;
    CHECK(realized >= r - 0.02);
    CHECK(realized <= r + 0.02);
  }
}

TEST_CASE("synthetic generator r = 0.9 fraction inside [0.88, 0.92]") {
  SequenceDataset ds = synth_generate(0.9, 100, 100, 6, 5, 41);
  int64_t transient = 0, total = 0;
  for (const Sequence& seq : ds.sequences) {
    for (int label : seq.labels) {
      if (label == 0) ++transient;
    }
    total += 100;
  }
  double realized = static_cast<double>(transient) / total;
  CHECK(realized >= 0.88);
  CHECK(realized <= 0.92);
}

TEST_CASE("synthetic generator is deterministic") {
  SequenceDataset a = synth_generate(0.4, 50, 20, 5, 4, 43);
  SequenceDataset b = synth_generate(0.4, 50, 20, 5, 4, 43);
  REQUIRE(a.sequences.size() == b.sequences.size());
  for (size_t i = 0; i < a.sequences.size(); ++i) {
    CHECK(a.sequences[i].inputs.data == b.sequences[i].inputs.data);
    CHECK(a.sequences[i].labels == b.sequences[i].labels);
  }
}

TEST_CASE("synthetic labels stay within the advertised classes") {
  SequenceDataset ds = synth_generate(0.3, 60, 30, 5, 4, 47);
  CHECK(ds.num_classes() == 4);
  for (const Sequence& seq : ds.sequences) {
    for (int label : seq.labels) {
      CHECK(label >= 0);
      CHECK(label < 4);
    }
  }
}

TEST_CASE("dataset cache round trip is bitwise lossless") {
  TempDir dir("cache");
  SequenceDataset ds = synth_generate(0.5, 30, 15, 5, 4, 51);
  split_dataset(ds, 51);
  std::string path = (dir.path / "cache.bin").string();
  save_cache(path, ds);
  SequenceDataset loaded = load_cache(path);

  CHECK(loaded.meta.r == ds.meta.r);
  CHECK(loaded.meta.n == ds.meta.n);
  CHECK(loaded.meta.seed == ds.meta.seed);
  CHECK(loaded.meta.feature_dim == ds.meta.feature_dim);
  CHECK(loaded.meta.class_ids == ds.meta.class_ids);
  REQUIRE(loaded.sequences.size() == ds.sequences.size());
  for (size_t i = 0; i < ds.sequences.size(); ++i) {
    CHECK(loaded.sequences[i].inputs.data == ds.sequences[i].inputs.data);
    CHECK(loaded.sequences[i].labels == ds.sequences[i].labels);
    CHECK(loaded.sequences[i].split == ds.sequences[i].split);
    CHECK(loaded.sequences[i].subject_id == ds.sequences[i].subject_id);
  }
}
