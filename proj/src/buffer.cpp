// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include "chunksched/buffer.hpp"

#include <cstring>
#include <random>
#include <sstream>

#include "chunksched/error.hpp"

namespace chunksched {

Buffers make_inputs(const Workload& w, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dist(-4, 4);
  const auto tensors = workload_tensors(w);
  Buffers out(w.schedule.world_size);
  for (auto& rank : out) {
    for (const auto& [id, t] : tensors) {
      std::vector<double> v(t.elements());
      for (double& x : v) x = dist(rng);
      rank[id] = std::move(v);
    }
  }
  return out;
}

std::optional<std::string> first_difference(const Buffers& a,
                                            const Buffers& b) {
  if (a.size() != b.size()) return "rank counts differ";
  for (size_t r = 0; r < a.size(); ++r) {
    if (a[r].size() != b[r].size()) {
      return "tensor sets differ on rank " + std::to_string(r);
    }
    for (const auto& [id, va] : a[r]) {
      auto it = b[r].find(id);
      if (it == b[r].end()) return "rank " + std::to_string(r) + " lacks " + id;
      const auto& vb = it->second;
      if (va.size() != vb.size()) return "size of " + id + " differs";
      for (size_t i = 0; i < va.size(); ++i) {
        if (std::memcmp(&va[i], &vb[i], sizeof(double)) != 0) {
          std::ostringstream os;
          os << "rank " << r << " tensor " << id << " element " << i << ": "
             << va[i] << " vs " << vb[i];
          return os.str();
        }
      }
    }
  }
  return std::nullopt;
}

ValueStore::ValueStore(const Buffers& init) : data_(init.size()) {
  for (size_t r = 0; r < init.size(); ++r) {
    for (const auto& [id, v] : init[r]) data_[r][id].base = v;
  }
}

double ValueStore::value(const Entry& e, int64_t i) const {
  double v = e.base[i];
  for (const auto& [src, acc] : e.acc) v += acc[i];
  return v;
}

std::vector<double> ValueStore::read(int rank, const std::string& tensor,
                                     const std::vector<int64_t>& index) const {
  const Entry& e = data_.at(rank).at(tensor);
  std::vector<double> out;
  out.reserve(index.size());
  for (int64_t i : index) out.push_back(value(e, i));
  return out;
}

void ValueStore::overwrite(int rank, const std::string& tensor,
                           const std::vector<int64_t>& index,
                           const std::vector<double>& values) {
  Entry& e = data_.at(rank).at(tensor);
  for (size_t k = 0; k < index.size(); ++k) {
    e.base[index[k]] = values[k];
    for (auto& [src, acc] : e.acc) acc[index[k]] = 0;
  }
}

void ValueStore::accumulate(int rank, const std::string& tensor, int source,
                            const std::vector<int64_t>& index,
                            const std::vector<double>& values) {
  Entry& e = data_.at(rank).at(tensor);
  auto& acc = e.acc[source];
  if (acc.empty()) acc.assign(e.base.size(), 0.0);
  for (size_t k = 0; k < index.size(); ++k) acc[index[k]] += values[k];
}

Buffers ValueStore::materialize() const {
  Buffers out(data_.size());
  for (size_t r = 0; r < data_.size(); ++r) {
    for (const auto& [id, e] : data_[r]) {
      std::vector<double> v(e.base.size());
      for (size_t i = 0; i < v.size(); ++i) v[i] = value(e, i);
      out[r][id] = std::move(v);
    }
  }
  return out;
}

std::vector<std::vector<double>> tile_body(
    const TileProgram& p, int64_t tile,
    const std::map<std::string, TensorSpec>& tensors,
    const std::vector<std::vector<double>>& reads) {
  std::vector<const TileAccess*> writes;
  for (const TileAccess& a : p.accesses) {
    if (a.write) writes.push_back(&a);
  }
  std::vector<std::vector<double>> out;
  if (p.body == TileBody::gemm) {
    // C[m,n] = sum_k A[m,k] * B[n,k], k ascending.
    std::vector<Region> in;
    for (const TileAccess& a : p.accesses) {
      if (!a.write) in.push_back(p.region(a, tile));
    }
    if (in.size() != 2 || writes.size() != 1 || in[0].dims() != 2 ||
        in[1].dims() != 2 || in[0].sizes[1] != in[1].sizes[1]) {
      throw Error("gemm body needs reads A[m,k], B[n,k] and one write");
    }
    const int64_t bm = in[0].sizes[0], bn = in[1].sizes[0], k = in[0].sizes[1];
    const Region c = p.region(*writes[0], tile);
    if (c.elements() != bm * bn) {
      throw Error("gemm body output region does not match its inputs");
    }
    std::vector<double> v(bm * bn, 0.0);
    for (int64_t i = 0; i < bm; ++i) {
      for (int64_t j = 0; j < bn; ++j) {
        double acc = 0;
        for (int64_t x = 0; x < k; ++x) {
          acc += reads[0][i * k + x] * reads[1][j * k + x];
        }
        v[i * bn + j] = acc;
      }
    }
    out.push_back(std::move(v));
    return out;
  }
  double sum = 0;
  for (const auto& r : reads) {
    for (double x : r) sum += x;
  }
  for (const TileAccess* a : writes) {
    const Region r = p.region(*a, tile);
    const auto idx =
        flat_indices(r, Layout::row_major, tensors.at(a->tensor_id).shape);
    std::vector<double> v(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) v[i] = sum + static_cast<double>(idx[i]);
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace chunksched
