#include "ragmod/embedding.hpp"

#include "ragmod/hash.hpp"

#include <cctype>

namespace ragmod::memory {

std::vector<Embedding> Embedder::embed_batch(const std::vector<std::string>& texts) const {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current += static_cast<char>(std::tolower(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::string HashedBagEmbedder::tag() const {
    return "local-fnv1a-bag-" + std::to_string(dimension_);
}

std::size_t HashedBagEmbedder::bucket(std::string_view token) const {
    return fnv1a32(token) % static_cast<std::uint32_t>(dimension_);
}

Embedding HashedBagEmbedder::embed(std::string_view text) const {
    Embedding v = Embedding::Zero(dimension_);
    for (const auto& tok : tokenize(text)) v[static_cast<Eigen::Index>(bucket(tok))] += 1.0;
    normalize_or_zero(v);
    return v;
}

}  // namespace ragmod::memory
