#pragma once

#include <cassert>
#include <cstdint>
#include <utility>
#include <vector>

namespace treecipher {

/// Which label substitutions count as a cipher: any bijection, or only the
/// identity (labels must match verbatim). Applies to label maps only; node
/// maps are always plain bijections.
enum class CipherMode { Bijective, Identity };

/// Injective partial map over dense integer domains, with O(1) forward and
/// inverse lookup and insertion-ordered entries (the newest entry can be
/// popped, which is what the backtracking trail needs).
class PartialBijection {
 public:
  PartialBijection() = default;
  PartialBijection(std::size_t domain_size, std::size_t codomain_size)
      : fwd_(domain_size, kNone), inv_(codomain_size, kNone) {}

  bool contains(std::uint32_t a) const { return fwd_[a] != kNone; }
  bool image_contains(std::uint32_t b) const { return inv_[b] != kNone; }
  std::uint32_t at(std::uint32_t a) const {
    assert(contains(a));
    return fwd_[a];
  }
  std::uint32_t preimage(std::uint32_t b) const {
    assert(image_contains(b));
    return inv_[b];
  }
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::uint32_t, std::uint32_t>>& entries() const {
    return entries_;
  }

  void insert(std::uint32_t a, std::uint32_t b) {
    assert(!contains(a) && !image_contains(b));
    fwd_[a] = b;
    inv_[b] = a;
    entries_.push_back({a, b});
  }

  void erase_last() {
    assert(!entries_.empty());
    auto [a, b] = entries_.back();
    fwd_[a] = kNone;
    inv_[b] = kNone;
    entries_.pop_back();
  }

 private:
  static constexpr std::uint32_t kNone = 0xFFFFFFFFu;
  std::vector<std::uint32_t> fwd_, inv_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries_;
};

/// Compatibility test and extension step: true iff the couple (a,b) respects
/// psi, extending psi with (a,b) when a is outside its domain. Identity mode
/// additionally requires a == b.
inline bool ext_bij(std::uint32_t a, std::uint32_t b, PartialBijection& psi,
                    CipherMode mode = CipherMode::Bijective) {
  if (mode == CipherMode::Identity && a != b) return false;
  if (psi.contains(a)) return psi.at(a) == b;
  if (psi.image_contains(b)) return false;
  psi.insert(a, b);
  return true;
}

}  // namespace treecipher
