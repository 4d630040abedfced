#include "iodiag/kb.hpp"

#include "iodiag/kernels.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace iodiag::kb {

namespace fs = std::filesystem;
using nlohmann::json;

EmbeddingFailure::EmbeddingFailure(std::string doc_id, std::size_t chunk_index,
                                   const std::string& cause)
    : std::runtime_error("embedding failed for " + doc_id + "#" + std::to_string(chunk_index) +
                         ": " + cause),
      doc_id_(std::move(doc_id)),
      chunk_index_(chunk_index) {}

std::vector<std::string_view> tokenize(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    auto is_space = [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    };
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        if (i >= text.size()) break;
        const auto start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        out.push_back(text.substr(start, i - start));
    }
    return out;
}

std::vector<KnowledgeChunk> chunk_document(std::string_view text, std::string_view doc_id,
                                           std::size_t chunk_size, std::size_t overlap) {
    if (chunk_size == 0 || overlap >= chunk_size)
        throw std::invalid_argument("chunk_size must exceed overlap");
    const auto tokens = tokenize(text);
    if (tokens.empty()) throw EmptyDocument("document '" + std::string(doc_id) + "' has no tokens");

    const std::size_t stride = chunk_size - overlap;
    std::vector<KnowledgeChunk> chunks;
    for (std::size_t start = 0;; start += stride) {
        const std::size_t end = std::min(start + chunk_size, tokens.size());
        KnowledgeChunk c;
        c.doc_id = std::string(doc_id);
        c.chunk_index = chunks.size();
        c.token_offset = start;
        c.token_count = end - start;
        for (std::size_t t = start; t < end; ++t) {
            if (t != start) c.text.push_back(' ');
            c.text.append(tokens[t]);
        }
        chunks.push_back(std::move(c));
        if (end == tokens.size()) break;
    }
    return chunks;
}

// -- VectorIndex -------------------------------------------------------------

void VectorIndex::add(EmbeddedChunk entry) {
    if (entry.vector.empty()) throw DimensionMismatch("empty embedding vector");
    if (dim_ == 0 && entries_.empty()) dim_ = entry.vector.size();
    if (entry.vector.size() != dim_) {
        throw DimensionMismatch("embedding has dimension " + std::to_string(entry.vector.size()) +
                                ", index expects " + std::to_string(dim_));
    }
    entry.norm = kernels::norm(entry.vector);
    if (!(entry.norm > 0.0)) throw std::invalid_argument("zero-norm embedding");
    matrix_.insert(matrix_.end(), entry.vector.begin(), entry.vector.end());
    norms_.push_back(entry.norm);
    entries_.push_back(std::move(entry));
}

std::vector<RetrievedSource> VectorIndex::search(std::span<const double> query, std::size_t k,
                                                 Execution mode) const {
    if (entries_.empty() || k == 0) return {};
    if (query.size() != dim_) {
        throw DimensionMismatch("query has dimension " + std::to_string(query.size()) +
                                ", index has " + std::to_string(dim_));
    }
    const double qn = kernels::norm(query);
    if (!(qn > 0.0)) throw std::invalid_argument("zero-norm query vector");

    std::vector<double> scores(entries_.size());
    if (mode == Execution::parallel)
        kernels::cosine_scores_parallel(matrix_, dim_, norms_, query, qn, scores);
    else
        kernels::cosine_scores_serial(matrix_, dim_, norms_, query, qn, scores);

    std::vector<std::size_t> order(entries_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto less = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        const auto& ca = entries_[a].chunk;
        const auto& cb = entries_[b].chunk;
        if (ca.doc_id != cb.doc_id) return ca.doc_id < cb.doc_id;
        return ca.chunk_index < cb.chunk_index;
    };
    const std::size_t n = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), less);

    std::vector<RetrievedSource> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = entries_[order[i]];
        out.push_back(RetrievedSource{e.chunk, e.citation, scores[order[i]], order[i]});
    }
    return out;
}

void VectorIndex::sort() {
    auto entries = std::move(entries_);
    std::stable_sort(entries.begin(), entries.end(), [](const EmbeddedChunk& a, const EmbeddedChunk& b) {
        if (a.chunk.doc_id != b.chunk.doc_id) return a.chunk.doc_id < b.chunk.doc_id;
        return a.chunk.chunk_index < b.chunk.chunk_index;
    });
    entries_.clear();
    matrix_.clear();
    norms_.clear();
    dim_ = 0;
    for (auto& e : entries) add(std::move(e));
}

namespace {

json entry_to_json(const EmbeddedChunk& e) {
    json j;
    j["doc_id"] = e.chunk.doc_id;
    j["chunk_index"] = e.chunk.chunk_index;
    j["token_offset"] = e.chunk.token_offset;
    j["token_count"] = e.chunk.token_count;
    j["title"] = e.title;
    j["citation"] = e.citation;
    j["text"] = e.chunk.text;
    j["vector"] = e.vector;
    return j;
}

EmbeddedChunk entry_from_json(const json& j) {
    EmbeddedChunk e;
    e.chunk.doc_id = j.at("doc_id").get<std::string>();
    e.chunk.chunk_index = j.at("chunk_index").get<std::size_t>();
    e.chunk.token_offset = j.value("token_offset", std::size_t{0});
    e.chunk.token_count = j.at("token_count").get<std::size_t>();
    e.chunk.text = j.at("text").get<std::string>();
    e.title = j.value("title", std::string());
    e.citation = j.value("citation", std::string());
    e.vector = j.at("vector").get<std::vector<double>>();
    return e;
}

void write_lines(std::ostream& out, std::span<const EmbeddedChunk> entries) {
    for (const auto& e : entries) out << entry_to_json(e).dump() << '\n';
}

}  // namespace

void VectorIndex::save(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write index " + tmp.string());
        write_lines(out, entries_);
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

VectorIndex VectorIndex::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open index " + path.string());
    VectorIndex index;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            index.add(entry_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return index;
}

// -- corpus and build ----------------------------------------------------------

std::vector<CorpusDocument> load_corpus(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("corpus directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".txt" || ext == ".md") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<CorpusDocument> docs;
    std::set<std::string> ids;
    for (const auto& file : files) {
        CorpusDocument d;
        d.meta.doc_id = file.stem().string();
        if (!ids.insert(d.meta.doc_id).second)
            throw std::runtime_error("duplicate document id '" + d.meta.doc_id + "' in corpus");
        d.meta.source_path = file.string();
        d.meta.title = d.meta.doc_id;
        std::ifstream in(file, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        d.text = buf.str();

        const auto sidecar = file.parent_path() / (file.stem().string() + ".meta.json");
        if (fs::exists(sidecar)) {
            std::ifstream meta_in(sidecar);
            const auto meta = json::parse(meta_in);
            d.meta.title = meta.value("title", d.meta.title);
            d.meta.citation = meta.value("citation", std::string());
        }
        if (d.meta.citation.empty()) d.meta.citation = d.meta.title;
        docs.push_back(std::move(d));
    }
    return docs;
}

BuildResult build_index(const fs::path& corpus_dir, const EmbedFn& embed_fn,
                        const fs::path& index_path, const BuildOptions& options) {
    const auto docs = load_corpus(corpus_dir);

    struct Pending {
        KnowledgeChunk chunk;
        const KnowledgeDocument* doc;
    };
    std::vector<Pending> all;
    for (const auto& d : docs) {
        std::vector<KnowledgeChunk> chunks;
        try {
            chunks = chunk_document(d.text, d.meta.doc_id, options.chunk_size, options.overlap);
        } catch (const EmptyDocument&) {
            continue;  // nothing to retrieve from an empty file
        }
        for (auto& c : chunks) all.push_back({std::move(c), &d.meta});
    }

    // Checkpoint: reuse vectors whose chunk is unchanged.
    std::map<std::pair<std::string, std::size_t>, EmbeddedChunk> previous;
    if (fs::exists(index_path)) {
        std::ifstream in(index_path, std::ios::binary);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                auto e = entry_from_json(json::parse(line));
                auto key = std::make_pair(e.chunk.doc_id, e.chunk.chunk_index);
                previous.insert_or_assign(std::move(key), std::move(e));
            } catch (const std::exception&) {
                // a torn trailing line from an interrupted run; re-embed it
            }
        }
    }

    BuildResult result;
    std::vector<EmbeddedChunk> done;
    std::vector<const Pending*> todo;
    for (const auto& p : all) {
        auto it = previous.find({p.chunk.doc_id, p.chunk.chunk_index});
        if (it != previous.end() && it->second.chunk.text == p.chunk.text) {
            auto e = it->second;
            e.title = p.doc->title;
            e.citation = p.doc->citation;
            done.push_back(std::move(e));
            ++result.reused;
        } else {
            todo.push_back(&p);
        }
    }

    // Rewrite the checkpoint with the reusable entries before embedding more.
    if (index_path.has_parent_path()) fs::create_directories(index_path.parent_path());
    {
        std::ofstream out(index_path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write index " + index_path.string());
        write_lines(out, done);
    }

    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
    const std::size_t n_batches = (todo.size() + batch - 1) / batch;
    const std::size_t wave = static_cast<std::size_t>(std::max(1, options.max_inflight));
    for (std::size_t first = 0; first < n_batches; first += wave) {
        const std::size_t count = std::min(wave, n_batches - first);
        std::vector<std::vector<EmbeddedChunk>> produced(count);
        std::vector<std::string> failures(count);
        for_each_index(count, options.execution, options.max_inflight, [&](std::size_t w) {
            const std::size_t b = first + w;
            const std::size_t lo = b * batch, hi = std::min(lo + batch, todo.size());
            std::vector<std::string> texts;
            for (std::size_t i = lo; i < hi; ++i) texts.push_back(todo[i]->chunk.text);
            try {
                auto vectors = embed_fn(texts);
                if (vectors.size() != texts.size())
                    throw std::runtime_error("embedder returned " + std::to_string(vectors.size()) +
                                             " vectors for " + std::to_string(texts.size()) + " texts");
                for (std::size_t i = lo; i < hi; ++i) {
                    EmbeddedChunk e;
                    e.chunk = todo[i]->chunk;
                    e.vector = std::move(vectors[i - lo]);
                    e.title = todo[i]->doc->title;
                    e.citation = todo[i]->doc->citation;
                    produced[w].push_back(std::move(e));
                }
            } catch (const std::exception& ex) {
                failures[w] = ex.what();
                produced[w].clear();
            }
        });

        std::ofstream out(index_path, std::ios::binary | std::ios::app);
        for (std::size_t w = 0; w < count; ++w) {
            write_lines(out, produced[w]);
            result.embedded += produced[w].size();
            for (auto& e : produced[w]) done.push_back(std::move(e));
        }
        out.flush();
        for (std::size_t w = 0; w < count; ++w) {
            if (failures[w].empty()) continue;
            const auto& chunk = todo[(first + w) * batch]->chunk;
            throw EmbeddingFailure(chunk.doc_id, chunk.chunk_index, failures[w]);
        }
    }

    for (auto& e : done) result.index.add(std::move(e));
    result.index.sort();
    result.index.save(index_path);
    return result;
}

}  // namespace iodiag::kb
