#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "n2c2/core.hpp"
#include "n2c2/rng.hpp"

namespace n2c2 {

class ShapingLayer;

inline constexpr int kDatasetFormatVersion = 1;

// Contents of one dataset JSONL file.
struct Dataset {
  LabelSpace labels;
  std::size_t dim = 0;
  std::vector<EmbeddingRecord> records;
};

Dataset load_dataset(const std::filesystem::path& path);
Dataset read_dataset(std::istream& in);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
void write_dataset(const Dataset& dataset, std::ostream& out);

struct DatastoreEntry {
  std::vector<double> key;
  std::size_t label = 0;
  double self_prob = 0.0;  // base model probability of `label` on this entry
  std::string id;
};

// Retrieval keys and values. Immutable once built.
class Datastore {
 public:
  Datastore(LabelSpace labels, std::size_t dim, std::vector<DatastoreEntry> entries, bool shaped);

  const std::vector<DatastoreEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const LabelSpace& labels() const noexcept { return labels_; }
  std::size_t num_classes() const noexcept { return labels_.num_classes(); }
  bool shaped() const noexcept { return shaped_; }

 private:
  LabelSpace labels_;
  std::size_t dim_;
  std::vector<DatastoreEntry> entries_;
  bool shaped_;
};

// Disjoint halves of the train split: one feeds the datastore, the other
// supplies the queries the lightweight modules are fit on.
struct SplitPlan {
  std::vector<std::string> retrieval_ids;
  std::vector<std::string> update_ids;
};

// Per-class stratified halving. Odd-sized classes alternate which half gets
// the extra record so the overall halves differ by at most one.
SplitPlan make_split(const std::vector<EmbeddingRecord>& records, std::size_t num_classes, Rng& rng);

// One entry per view of every record named in `ids`. Keys are passed through
// `shaper` when given.
Datastore build_datastore(const std::vector<EmbeddingRecord>& records,
                          const std::vector<std::string>& ids,
                          const LabelSpace& labels,
                          const ShapingLayer* shaper = nullptr);

// Records whose id is in `ids`, in `ids` order.
std::vector<EmbeddingRecord> select_records(const std::vector<EmbeddingRecord>& records,
                                            const std::vector<std::string>& ids);

std::vector<EmbeddingRecord> records_with_split(const std::vector<EmbeddingRecord>& records,
                                                Split split);

}  // namespace n2c2
