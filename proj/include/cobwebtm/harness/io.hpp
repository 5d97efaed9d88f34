#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cobwebtm/metrics/metrics.hpp"
#include "cobwebtm/topics/corpus.hpp"

namespace cobwebtm {

// Row-major f32 matrix as stored in a CBW1 file.
struct EmbeddingMatrix {
  std::uint32_t dim = 0;
  std::uint64_t rows = 0;
  std::vector<float> values;

  std::span<const float> row(std::uint64_t i) const;
};

// "CBW1", u32 D, u64 rows, rows * D f32; all little-endian.
EmbeddingMatrix read_cbw1(const std::filesystem::path& path);
void write_cbw1(const std::filesystem::path& path, const EmbeddingMatrix& m);

struct DocumentLine {
  DocId id;
  std::vector<std::string> tokens;
  std::optional<std::string> label;
  std::optional<std::string> timestamp;
};

// One {"id", "tokens", "label"?, "timestamp"?} object per line. Blank lines
// are skipped; duplicate ids are rejected.
std::vector<DocumentLine> read_docs_jsonl(const std::filesystem::path& path);
void write_docs_jsonl(const std::filesystem::path& path, const std::vector<DocumentLine>& docs);

std::vector<std::string> read_vocabulary(const std::filesystem::path& path);
void write_vocabulary(const std::filesystem::path& path, const std::vector<std::string>& words);

// Sidecar written next to an embedding file: {"model", "D", "count",
// "checksum"}. The checksum is the SHA-256 hex digest of the lines
// "<id>\t<sha256 hex of row i as little-endian f32>\n", i = 0..count-1.
struct EmbeddingManifest {
  std::string model;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  std::string checksum;
};

std::string stream_checksum(const std::vector<DocumentLine>& docs, const EmbeddingMatrix& embeddings);
EmbeddingManifest make_manifest(std::string model, const std::vector<DocumentLine>& docs,
                                const EmbeddingMatrix& embeddings);
EmbeddingManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const EmbeddingManifest& manifest);
// Throws ValidationError naming the first field that disagrees.
void verify_manifest(const EmbeddingManifest& manifest, const std::vector<DocumentLine>& docs,
                     const EmbeddingMatrix& embeddings);

// CBW1 matrix plus its row-aligned vocabulary sidecar.
WordVectorTable read_word_vectors(const std::filesystem::path& vectors, const std::filesystem::path& vocabulary);

// Documents paired with their embeddings, checked for matching counts and
// finite values before anything is returned.
std::vector<DocumentRecord> load_stream(const std::filesystem::path& docs, const std::filesystem::path& embeddings,
                                        const std::optional<std::filesystem::path>& manifest = std::nullopt);
std::vector<DocumentRecord> pair_stream(std::vector<DocumentLine> docs, const EmbeddingMatrix& embeddings);

}  // namespace cobwebtm
