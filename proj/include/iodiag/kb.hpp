#pragma once

#include "iodiag/parallel.hpp"

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace iodiag::kb {

inline constexpr std::size_t kDefaultChunkSize = 512;
inline constexpr std::size_t kDefaultChunkOverlap = 20;
inline constexpr std::size_t kDefaultTopK = 15;

struct KnowledgeDocument {
    std::string doc_id;
    std::string title;
    std::string source_path;
    std::string citation;
};

struct KnowledgeChunk {
    std::string doc_id;
    std::size_t chunk_index = 0;
    std::size_t token_offset = 0;  // first token's position in the document
    std::string text;
    std::size_t token_count = 0;
};

struct EmbeddedChunk {
    KnowledgeChunk chunk;
    std::vector<double> vector;
    double norm = 0.0;
    std::string title;
    std::string citation;
};

struct RetrievedSource {
    KnowledgeChunk chunk;
    std::string citation;
    double score = 0.0;
    std::size_t position = 0;  // row in the index
};

class EmptyDocument : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmbeddingFailure : public std::runtime_error {
public:
    EmbeddingFailure(std::string doc_id, std::size_t chunk_index, const std::string& cause);
    const std::string& doc_id() const { return doc_id_; }
    std::size_t chunk_index() const { return chunk_index_; }

private:
    std::string doc_id_;
    std::size_t chunk_index_;
};

/// Whitespace-delimited tokens; the chunker's unit of length.
std::vector<std::string_view> tokenize(std::string_view text);

/// Splits a document into windows of `chunk_size` tokens advancing by
/// `chunk_size - overlap`. Chunk text is the window's tokens joined by one
/// space.
std::vector<KnowledgeChunk> chunk_document(std::string_view text, std::string_view doc_id,
                                           std::size_t chunk_size = kDefaultChunkSize,
                                           std::size_t overlap = kDefaultChunkOverlap);

/// Exact cosine-similarity index. Immutable once built; concurrent searches
/// are safe.
class VectorIndex {
public:
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t dimension() const { return dim_; }
    const EmbeddedChunk& at(std::size_t i) const { return entries_.at(i); }
    std::span<const EmbeddedChunk> entries() const { return entries_; }

    /// Throws DimensionMismatch if the vector width differs from earlier
    /// entries, std::invalid_argument for a zero vector.
    void add(EmbeddedChunk entry);

    /// Top min(k, size()) by cosine similarity, descending; ties ordered by
    /// (doc_id, chunk_index).
    std::vector<RetrievedSource> search(std::span<const double> query,
                                        std::size_t k = kDefaultTopK,
                                        Execution mode = Execution::parallel) const;

    /// JSON Lines, one chunk per line.
    void save(const std::filesystem::path& path) const;
    static VectorIndex load(const std::filesystem::path& path);

    /// Reorders entries by (doc_id, chunk_index).
    void sort();

private:
    std::vector<EmbeddedChunk> entries_;
    std::vector<double> matrix_;
    std::vector<double> norms_;
    std::size_t dim_ = 0;
};

struct CorpusDocument {
    KnowledgeDocument meta;
    std::string text;
};

/// Loads `.txt`/`.md` files (sorted by name) with optional `<stem>.meta.json`
/// sidecars carrying "title" and "citation".
std::vector<CorpusDocument> load_corpus(const std::filesystem::path& dir);

using EmbedFn = std::function<std::vector<std::vector<double>>(const std::vector<std::string>&)>;

struct BuildOptions {
    std::size_t chunk_size = kDefaultChunkSize;
    std::size_t overlap = kDefaultChunkOverlap;
    std::size_t batch_size = 16;
    int max_inflight = 8;
    Execution execution = Execution::parallel;
};

struct BuildResult {
    VectorIndex index;
    std::size_t embedded = 0;  // chunks sent to embed_fn in this run
    std::size_t reused = 0;    // chunks taken from an existing index file
};

/// Chunks and embeds every document, persisting to `index_path`. Chunks
/// already present in an existing index file (same doc id, position and
/// text) are reused. On an embedding error the chunks embedded so far are
/// flushed to the index file and EmbeddingFailure is thrown.
BuildResult build_index(const std::filesystem::path& corpus_dir, const EmbedFn& embed_fn,
                        const std::filesystem::path& index_path, const BuildOptions& options = {});

}  // namespace iodiag::kb
