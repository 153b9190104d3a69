// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "relalign/layout.hpp"

namespace relalign {

/// One annotated object: the token indices and region indices that describe
/// it. Index sets may overlap across objects but not repeat within one set.
struct ObjectAnnotation {
  std::string name;
  std::vector<std::size_t> token_indices;
  std::vector<std::size_t> region_indices;
};

/// Ordered list of annotated objects for one image-text pair. The same
/// position indexes both modalities: entry i's tokens and regions describe
/// the same object.
class ObjectAnnotationSet {
 public:
  explicit ObjectAnnotationSet(std::vector<ObjectAnnotation> objects)
      : objects_(std::move(objects)) {
    if (objects_.empty())
      throw std::invalid_argument("annotations: need at least one object");
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      check_index_set(objects_[i].token_indices, i, "token_indices");
      check_index_set(objects_[i].region_indices, i, "region_indices");
    }
  }

  std::size_t size() const { return objects_.size(); }
  const ObjectAnnotation& operator[](std::size_t i) const { return objects_[i]; }
  const std::vector<ObjectAnnotation>& objects() const { return objects_; }

  const std::vector<std::size_t>& indices(std::size_t i, Modality m) const {
    return m == Modality::Text ? objects_[i].token_indices : objects_[i].region_indices;
  }

  /// Bounds are deferred until the set is paired with a concrete layout.
  void check_bounds(const ModalityLayout& layout) const {
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      for (std::size_t t : objects_[i].token_indices) {
        if (t >= layout.n_l) {
          throw std::out_of_range("annotations: object " + std::to_string(i) + " token index " +
                                  std::to_string(t) + " exceeds n_l=" + std::to_string(layout.n_l));
        }
      }
      for (std::size_t r : objects_[i].region_indices) {
        if (r >= layout.n_v) {
          throw std::out_of_range("annotations: object " + std::to_string(i) + " region index " +
                                  std::to_string(r) + " exceeds n_v=" + std::to_string(layout.n_v));
        }
      }
    }
  }

 private:
  std::vector<ObjectAnnotation> objects_;

  static void check_index_set(const std::vector<std::size_t>& idx, std::size_t object,
                              const char* field) {
    if (idx.empty()) {
      throw std::invalid_argument("annotations: object " + std::to_string(object) + " has empty " +
                                  field);
    }
    std::unordered_set<std::size_t> seen;
    for (std::size_t v : idx) {
      if (!seen.insert(v).second) {
        throw std::invalid_argument("annotations: object " + std::to_string(object) +
                                    " repeats index " + std::to_string(v) + " in " + field);
      }
    }
  }
};

}  // namespace relalign
