#pragma once

#include <iosfwd>
#include <string>

#include "viser/embedding.hpp"

namespace viser {

// Corpus file formats.
//
// JSONL: one object per line with fields `id` (unsigned), `vector`
// (array of numbers) and optional `labels` (array of class indices).
//
// Binary ("VSRE"): 20-byte little-endian header
//   magic "VSRE" | format version u32 = 1 | dimension u32 | record count u64
// followed by one record per entry: id u64 | dimension x f32.
//
// Loaders validate id uniqueness, consistent dimension and finite entries;
// errors name the offending line (JSONL) or record index (binary).

enum class CorpusFormat { jsonl, binary };

Corpus load_corpus(const std::string& path);  // sniffs the binary magic
Corpus load_corpus_jsonl(std::istream& in, const std::string& name);
Corpus load_corpus_binary(std::istream& in, const std::string& name);

void save_corpus(const Corpus& corpus, const std::string& path, CorpusFormat format);
void save_corpus_jsonl(const Corpus& corpus, std::ostream& out);
void save_corpus_binary(const Corpus& corpus, std::ostream& out);

// Densify a sparse class-index list into a length-`classes` LabelVector.
LabelVector to_label_vector(const std::vector<std::uint32_t>& indices, std::size_t classes);

}  // namespace viser
