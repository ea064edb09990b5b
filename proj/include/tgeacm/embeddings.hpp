#pragma once

#include <cstdint>
#include <string>

#include "tgeacm/corpus.hpp"
#include "tgeacm/params.hpp"

namespace tgeacm {

enum class EmbeddingKind { Semantic, Emotional };

std::string_view embedding_kind_name(EmbeddingKind kind);

inline constexpr double kEmbeddingInitRange = 0.1;

// |V| x d table: rows in [-0.1, 0.1] from a stream derived from (seed, kind);
// PAD/BOS/EOS rows are zero, UNK is random.
Mat random_embeddings(const Vocabulary& vocab, int dim, EmbeddingKind kind, std::uint64_t seed);

// Word-embedding text format: header "<count> <dim>", then "<token> f1 ... fd"
// per line. Rows of in-vocabulary tokens are copied verbatim (as float32);
// everything else follows random_embeddings().
Mat load_embeddings(const std::string& path, const Vocabulary& vocab, int dim, EmbeddingKind kind,
                    std::uint64_t seed);

}  // namespace tgeacm
