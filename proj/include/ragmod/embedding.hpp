#pragma once

#include <Eigen/Core>

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace ragmod::memory {

using Embedding = Eigen::VectorXd;

/// Cosine similarity; zero-norm operands compare as 0 against everything.
template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0 || a.size() != b.size()) return 0.0;
    return a.dot(b) / (na * nb);
}

/// In-place L2 normalisation; the zero vector stays zero.
template <typename Derived>
void normalize_or_zero(Eigen::MatrixBase<Derived>& v) {
    const double n = v.norm();
    if (n > 0.0) v /= n;
}

class Embedder {
public:
    virtual ~Embedder() = default;
    /// Identity tag stored alongside every memory; stores never mix tags.
    virtual std::string tag() const = 0;
    virtual Embedding embed(std::string_view text) const = 0;
    virtual std::vector<Embedding> embed_batch(const std::vector<std::string>& texts) const;
};

/// Lowercased alphanumeric tokens; everything else separates.
std::vector<std::string> tokenize(std::string_view text);

/// Offline bag-of-hashed-tokens embedder: FNV-1a bucket counts, L2-normalised.
class HashedBagEmbedder final : public Embedder {
public:
    explicit HashedBagEmbedder(int dimension = 256) : dimension_(dimension) {}

    std::string tag() const override;
    Embedding embed(std::string_view text) const override;

    int dimension() const { return dimension_; }
    std::size_t bucket(std::string_view token) const;

private:
    int dimension_;
};

}  // namespace ragmod::memory
