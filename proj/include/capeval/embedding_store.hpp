#ifndef CAPEVAL_EMBEDDING_STORE_HPP
#define CAPEVAL_EMBEDDING_STORE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace capeval {

enum class Modality : std::uint8_t { image = 0, text = 1 };

struct EmbeddingRecord {
  std::string id;
  Eigen::VectorXf vector;
  Modality modality = Modality::text;
};

/// Id-keyed collection of embeddings sharing one dimension.
///
/// Records keep their insertion order, which is also the on-disk order, so
/// save/load round trips are byte-stable. Lookup is exact-match on id.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dimension);

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Inserts a record verbatim. Throws DataError on duplicate id or
  /// dimension mismatch.
  void add(std::string id, Eigen::VectorXf vector, Modality modality);

  /// Inserts after L2 normalization; zero vectors throw DataError naming the id.
  void add_normalized(std::string id, const Eigen::Ref<const Eigen::VectorXf>& vector,
                      Modality modality);

  const EmbeddingRecord* find(std::string_view id) const;
  /// Throws DataError when the id is absent.
  const EmbeddingRecord& at(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }

  const std::vector<EmbeddingRecord>& records() const { return records_; }
  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b);

 private:
  std::size_t dimension_;
  std::vector<EmbeddingRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Vectors whose norm is already within this distance of 1 are kept bit-exact
/// at load time; everything else is rescaled. Keeps normalization idempotent.
inline constexpr double kUnitNormTolerance = 1e-5;

/// Returns v / ||v|| computed in double precision, or v unchanged when it is
/// already unit-norm within kUnitNormTolerance. Throws DataError for zero vectors.
Eigen::VectorXf normalize_embedding(const Eigen::Ref<const Eigen::VectorXf>& v,
                                    std::string_view id);

// CAPEVEC1 binary layout (all little-endian):
//   "CAPEVEC1" | u32 version=1 | u32 dim | u64 count |
//   count x ( u32 id_len | id bytes | u8 modality | dim x f32 )
inline constexpr std::string_view kStoreMagic = "CAPEVEC1";
inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr std::size_t kStoreHeaderBytes = 8 + 4 + 4 + 8;

EmbeddingStore load_store(const std::filesystem::path& path);
void save_store(const EmbeddingStore& store, const std::filesystem::path& path);

// Stream-level variants used by the file functions and by tests.
EmbeddingStore read_store(std::istream& in, const std::string& source = "<stream>");
void write_store(const EmbeddingStore& store, std::ostream& out);

}  // namespace capeval

#endif  // CAPEVAL_EMBEDDING_STORE_HPP
