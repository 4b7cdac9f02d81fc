#pragma once

// Adjacency construction over N region proposals: the learned similarity
// graph (bilinear affinity + row softmax, dense, self-edges included) and the
// forward/backward spatio-temporal graphs (IoU links between consecutive
// frames, row-normalized; rows with no overlap stay all-zero).
//
// Node order is canonical and shared by all three graphs: frame-major, then
// within-frame input order.

#include <cstddef>
#include <vector>

#include "strg/matrix.hpp"
#include "strg/regions.hpp"

namespace strg {

enum class GraphKind { sim, front, back };

inline const char* graph_kind_name(GraphKind k) {
    switch (k) {
        case GraphKind::sim: return "sim";
        case GraphKind::front: return "front";
        case GraphKind::back: return "back";
    }
    return "?";
}

/// N x N row-normalized edge weights for one relation type.
struct AdjacencyMatrix {
    GraphKind kind = GraphKind::sim;
    Matrix m;
};

/// The learnable transforms behind the similarity affinity.
struct AffinityTransforms {
    Matrix w;        // d x d
    Matrix w_prime;  // d x d
};

/// Pairwise affinity F[i][j] = (w x_i)^T (w' x_j), computed as (X w^T)(X w'^T)^T.
inline Matrix affinity(const Matrix& x, const AffinityTransforms& t) {
    if (t.w.cols() != x.cols() || t.w_prime.cols() != x.cols() ||
        t.w.rows() != t.w.cols() || t.w_prime.rows() != t.w_prime.cols())
        throw ShapeError("affinity: features " + x.shape_str() + " vs transforms " +
                         t.w.shape_str() + " / " + t.w_prime.shape_str());
    const Matrix p = matmul_nt(x, t.w);        // X w^T
    const Matrix q = matmul_nt(x, t.w_prime);  // X w'^T
    return matmul_nt(p, q);                    // (X w^T)(X w'^T)^T
}

/// Dense similarity adjacency: softmax-normalized affinities, self-edges kept.
inline AdjacencyMatrix build_similarity_graph(const Matrix& x, const AffinityTransforms& t) {
    if (x.rows() == 0) throw ShapeError("build_similarity_graph: no nodes");
    return {GraphKind::sim, softmax_rows(affinity(x, t))};
}

/// Raw forward overlaps: entry [i][j] = IoU(box_i, box_j) when node j sits on
/// the frame directly after node i's and the boxes overlap, else 0.
inline Matrix raw_front_overlaps(const std::vector<RegionProposal>& proposals) {
    const std::size_t n = proposals.size();
    Matrix raw(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (proposals[j].frame != proposals[i].frame + 1) continue;
            const double v = iou(proposals[i].box, proposals[j].box);
            if (v > 0.0) raw(i, j) = v;
        }
    }
    return raw;
}

/// Raw backward overlaps: entry [j][i] = IoU(box_i, box_j) for node i in
/// frame t and node j in frame t+1. Built by its own pass, not by transposing.
inline Matrix raw_back_overlaps(const std::vector<RegionProposal>& proposals) {
    const std::size_t n = proposals.size();
    Matrix raw(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            if (proposals[j].frame != proposals[i].frame + 1) continue;
            const double v = iou(proposals[i].box, proposals[j].box);
            if (v > 0.0) raw(j, i) = v;
        }
    }
    return raw;
}

namespace detail {

/// Divides every nonzero row by its sum; all-zero rows are left untouched.
inline Matrix normalize_rows_or_zero(Matrix raw) {
    for (std::size_t i = 0; i < raw.rows(); ++i) {
        auto r = raw.row(i);
        double sum = 0.0;
        for (double v : r) sum += v;
        if (sum > 0.0)
            for (double& v : r) v /= sum;
    }
    return raw;
}

}  // namespace detail

/// Directed frame-t -> frame-(t+1) graph weighted by IoU, row-normalized.
inline AdjacencyMatrix build_front_graph(const std::vector<RegionProposal>& proposals) {
    return {GraphKind::front, detail::normalize_rows_or_zero(raw_front_overlaps(proposals))};
}

/// Directed frame-(t+1) -> frame-t graph weighted by IoU, row-normalized.
inline AdjacencyMatrix build_back_graph(const std::vector<RegionProposal>& proposals) {
    return {GraphKind::back, detail::normalize_rows_or_zero(raw_back_overlaps(proposals))};
}

/// Canonical node order: stable sort by frame, preserving within-frame input
/// order. All three graphs and the feature matrix share this order.
inline std::vector<RegionProposal> canonical_order(std::vector<RegionProposal> proposals) {
    std::stable_sort(proposals.begin(), proposals.end(),
                     [](const RegionProposal& a, const RegionProposal& b) { return a.frame < b.frame; });
    return proposals;
}

}  // namespace strg
