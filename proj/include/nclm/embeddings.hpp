#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "nclm/corpus.hpp"
#include "nclm/rng.hpp"
#include "nclm/tensor.hpp"

namespace nclm {

struct EmbeddingFile {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

/// word2vec text format: header "<count> <dim>", then "word v1 ... vdim" rows.
inline EmbeddingFile read_embedding_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("embedding file is empty: " + path);
  std::istringstream header(line);
  std::size_t count = 0, dim = 0;
  if (!(header >> count >> dim) || dim == 0)
    throw ParseError(path + ":1: expected header \"<count> <dim>\"");

  EmbeddingFile out;
  out.dim = dim;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string word;
    row >> word;
    std::vector<double> vec;
    vec.reserve(dim);
    double v;
    while (row >> v) vec.push_back(v);
    if (vec.size() != dim)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(dim) + " values, got " + std::to_string(vec.size()));
    out.vectors[word] = std::move(vec);
  }
  return out;
}

/// Deterministic fallback column for words missing from the embedding file:
/// uniform in [-0.1, 0.1], keyed by (seed, word) so the result does not depend
/// on vocabulary order.
inline std::vector<double> missing_embedding(const std::string& word, std::size_t dim,
                                             std::uint64_t seed) {
  Rng rng(seed ^ DualVocab::hash_tokens({word}));
  std::vector<double> out(dim);
  for (auto& v : out) v = rng.uniform(-0.1, 0.1);
  return out;
}

/// Column i holds the embedding of ntm word i; [dim x Z].
template <class T>
Tensor<T> load_embeddings(const std::string& path, std::size_t expected_dim,
                          const DualVocab& vocab, std::uint64_t seed) {
  EmbeddingFile file = read_embedding_file(path);
  if (file.dim != expected_dim)
    throw ParseError("embedding dimension mismatch: file has " + std::to_string(file.dim) +
                     ", expected " + std::to_string(expected_dim));
  const std::size_t z = vocab.ntm_size();
  Tensor<T> e = Tensor<T>::zeros({expected_dim, z});
  for (std::size_t j = 0; j < z; ++j) {
    auto it = file.vectors.find(vocab.ntm_tokens[j]);
    const std::vector<double> col =
        it != file.vectors.end() ? it->second : missing_embedding(vocab.ntm_tokens[j], expected_dim, seed);
    for (std::size_t i = 0; i < expected_dim; ++i) e.at(i, j) = static_cast<T>(col[i]);
  }
  return e;
}

/// Fresh random topic-embedding matrix for runs without a pretrained file.
template <class T>
Tensor<T> random_embeddings(std::size_t dim, const DualVocab& vocab, std::uint64_t seed) {
  Tensor<T> e = Tensor<T>::zeros({dim, vocab.ntm_size()});
  for (std::size_t j = 0; j < vocab.ntm_size(); ++j) {
    const auto col = missing_embedding(vocab.ntm_tokens[j], dim, seed);
    for (std::size_t i = 0; i < dim; ++i) e.at(i, j) = static_cast<T>(col[i]);
  }
  return e;
}

}  // namespace nclm
