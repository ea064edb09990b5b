#include "tgeacm/embeddings.hpp"

#include <fstream>
#include <sstream>

#include "tgeacm/error.hpp"
#include "tgeacm/rng.hpp"

namespace tgeacm {

std::string_view embedding_kind_name(EmbeddingKind kind) {
  return kind == EmbeddingKind::Semantic ? "semantic" : "emotional";
}

Mat random_embeddings(const Vocabulary& vocab, int dim, EmbeddingKind kind, std::uint64_t seed) {
  if (dim <= 0) throw ConfigError("embedding dimension must be positive");
  Rng rng = Rng::derive(seed, std::string("embedding.") + std::string(embedding_kind_name(kind)));
  Mat table(vocab.size(), dim);
  for (int r = 0; r < vocab.size(); ++r)
    for (int c = 0; c < dim; ++c)
      table(r, c) = static_cast<double>(static_cast<float>(rng.uniform(-kEmbeddingInitRange, kEmbeddingInitRange)));
  for (int reserved : {Vocabulary::kPad, Vocabulary::kBos, Vocabulary::kEos}) table.row(reserved).setZero();
  return table;
}

Mat load_embeddings(const std::string& path, const Vocabulary& vocab, int dim, EmbeddingKind kind,
                    std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": missing header line");
  long count = 0, file_dim = 0;
  {
    std::istringstream hs(line);
    std::string extra;
    if (!(hs >> count >> file_dim) || (hs >> extra) || count < 0)
      throw FormatError(path + ":1: header must be '<count> <dim>'");
  }
  if (file_dim != dim)
    throw FormatError(path + ": dimension mismatch (file " + std::to_string(file_dim) + ", model " +
                      std::to_string(dim) + ")");

  Mat table = random_embeddings(vocab, dim, kind, seed);
  long rows_read = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    Vec row(dim);
    for (int c = 0; c < dim; ++c) {
      float v;
      if (!(ls >> v)) throw FormatError(path + ":" + std::to_string(line_no) + ": expected " +
                                        std::to_string(dim) + " values after '" + token + "'");
      row(c) = static_cast<double>(v);
    }
    std::string extra;
    if (ls >> extra) throw FormatError(path + ":" + std::to_string(line_no) + ": too many values");
    ++rows_read;
    if (vocab.contains(token)) table.row(vocab.id(token)) = row.transpose();
  }
  if (rows_read != count)
    throw FormatError(path + ": header declares " + std::to_string(count) + " rows, found " +
                      std::to_string(rows_read));
  return table;
}

}  // namespace tgeacm
