#include "viser/corpus_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace viser {

namespace {

constexpr char kMagic[4] = {'V', 'S', 'R', 'E'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

bool read_bytes(std::istream& in, void* dst, std::size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount()) == n;
}

std::uint32_t decode_u32(const unsigned char* b) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

std::uint64_t decode_u64(const unsigned char* b) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

void check_unique_id(std::unordered_set<std::uint64_t>& seen, std::uint64_t id,
                     const std::string& where) {
    if (!seen.insert(id).second) {
        throw LoadError(where + ": duplicate record id " + std::to_string(id));
    }
}

}  // namespace

Corpus load_corpus_jsonl(std::istream& in, const std::string& name) {
    Corpus corpus;
    std::unordered_set<std::uint64_t> seen;
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = name + ":" + std::to_string(lineno);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw LoadError(where + ": " + e.what());
        }
        if (!obj.is_object() || !obj.contains("id") || !obj.contains("vector")) {
            throw LoadError(where + ": expected an object with `id` and `vector`");
        }
        if (!obj["id"].is_number_unsigned()) {
            throw LoadError(where + ": `id` must be an unsigned integer");
        }
        EmbeddingRecord rec;
        rec.id = obj["id"].get<std::uint64_t>();
        check_unique_id(seen, rec.id, where);
        const auto& vec = obj["vector"];
        if (!vec.is_array() || vec.empty()) {
            throw LoadError(where + ": `vector` must be a non-empty array");
        }
        rec.vector.reserve(vec.size());
        for (const auto& x : vec) {
            if (!x.is_number()) throw LoadError(where + ": `vector` entries must be numbers");
            const double v = x.get<double>();
            if (!std::isfinite(v)) throw LoadError(where + ": non-finite vector entry");
            rec.vector.push_back(v);
        }
        if (dim == 0) {
            dim = rec.vector.size();
        } else if (rec.vector.size() != dim) {
            throw LoadError(where + ": dimension " + std::to_string(rec.vector.size()) +
                            " does not match corpus dimension " + std::to_string(dim));
        }
        if (obj.contains("labels")) {
            const auto& labels = obj["labels"];
            if (!labels.is_array()) throw LoadError(where + ": `labels` must be an array");
            std::vector<std::uint32_t> idx;
            for (const auto& l : labels) {
                if (!l.is_number_unsigned()) {
                    throw LoadError(where + ": `labels` entries must be unsigned integers");
                }
                idx.push_back(l.get<std::uint32_t>());
            }
            std::sort(idx.begin(), idx.end());
            idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
            corpus.labels.emplace(rec.id, std::move(idx));
        }
        corpus.records.push_back(std::move(rec));
    }
    return corpus;
}

Corpus load_corpus_binary(std::istream& in, const std::string& name) {
    unsigned char header[20];
    if (!read_bytes(in, header, sizeof(header))) {
        throw LoadError(name + ": truncated header (need 20 bytes)");
    }
    if (std::memcmp(header, kMagic, 4) != 0) {
        throw LoadError(name + ": bad magic, not a VSRE corpus");
    }
    const std::uint32_t version = decode_u32(header + 4);
    if (version != kFormatVersion) {
        throw LoadError(name + ": unsupported format version " + std::to_string(version));
    }
    const std::uint32_t dim = decode_u32(header + 8);
    const std::uint64_t count = decode_u64(header + 12);
    if (count > 0 && dim == 0) {
        throw LoadError(name + ": zero dimension with nonzero record count");
    }

    Corpus corpus;
    corpus.records.reserve(count);
    std::unordered_set<std::uint64_t> seen;
    const std::size_t record_bytes = 8 + 4 * static_cast<std::size_t>(dim);
    std::vector<unsigned char> buf(record_bytes);
    for (std::uint64_t i = 0; i < count; ++i) {
        if (!read_bytes(in, buf.data(), record_bytes)) {
            throw LoadError(name + ": truncated at record " + std::to_string(i) + " (byte offset " +
                            std::to_string(20 + i * record_bytes) + ")");
        }
        EmbeddingRecord rec;
        rec.id = decode_u64(buf.data());
        check_unique_id(seen, rec.id, name + ": record " + std::to_string(i));
        rec.vector.resize(dim);
        for (std::uint32_t d = 0; d < dim; ++d) {
            const std::uint32_t bits = decode_u32(buf.data() + 8 + 4 * d);
            float f;
            std::memcpy(&f, &bits, 4);
            if (!std::isfinite(f)) {
                throw LoadError(name + ": non-finite entry in record " + std::to_string(i));
            }
            rec.vector[d] = static_cast<double>(f);
        }
        corpus.records.push_back(std::move(rec));
    }
    char extra;
    if (in.read(&extra, 1)) {
        throw LoadError(name + ": trailing bytes after " + std::to_string(count) + " records");
    }
    return corpus;
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(path + ": cannot open file");
    char magic[4] = {};
    in.read(magic, 4);
    const bool is_binary = in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0;
    in.clear();
    in.seekg(0);
    return is_binary ? load_corpus_binary(in, path) : load_corpus_jsonl(in, path);
}

void save_corpus_jsonl(const Corpus& corpus, std::ostream& out) {
    for (const auto& rec : corpus.records) {
        nlohmann::ordered_json obj;
        obj["id"] = rec.id;
        obj["vector"] = rec.vector;
        auto it = corpus.labels.find(rec.id);
        if (it != corpus.labels.end()) obj["labels"] = it->second;
        out << obj.dump() << '\n';
    }
}

void save_corpus_binary(const Corpus& corpus, std::ostream& out) {
    out.write(kMagic, 4);
    write_u32(out, kFormatVersion);
    write_u32(out, static_cast<std::uint32_t>(corpus.dimension()));
    write_u64(out, corpus.records.size());
    for (const auto& rec : corpus.records) {
        write_u64(out, rec.id);
        for (double v : rec.vector) write_f32(out, static_cast<float>(v));
    }
}

void save_corpus(const Corpus& corpus, const std::string& path, CorpusFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError(path + ": cannot open file for writing");
    if (format == CorpusFormat::jsonl) {
        save_corpus_jsonl(corpus, out);
    } else {
        save_corpus_binary(corpus, out);
    }
    out.flush();
    if (!out) throw LoadError(path + ": write failed");
}

LabelVector to_label_vector(const std::vector<std::uint32_t>& indices, std::size_t classes) {
    LabelVector y(classes, 0);
    for (std::uint32_t idx : indices) {
        if (idx >= classes) {
            throw MissingLabelsError("label index " + std::to_string(idx) +
                                     " out of range for " + std::to_string(classes) + " classes");
        }
        y[idx] = 1;
    }
    return y;
}

}  // namespace viser
