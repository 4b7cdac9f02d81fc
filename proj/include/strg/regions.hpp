#pragma once

// Geometry of object proposals: bounding boxes, IoU, projection from input
// frames to feature frames, and a simplified RoIAlign turning a feature
// volume plus a box into one d-dimensional node feature.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "strg/matrix.hpp"

namespace strg {

/// Axis-aligned box in the coordinate frame it is declared in.
/// Invariant: x1 <= x2, y1 <= y2, all finite.
struct BoundingBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    bool valid() const {
        return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
               std::isfinite(y2) && x1 <= x2 && y1 <= y2;
    }
};

/// A graph node: a box on one feature frame plus its feature vector.
struct RegionProposal {
    int frame = 0;            // feature-frame index in [0, T)
    BoundingBox box;          // feature-map coordinates
    Vector feature;
    std::string source_id;    // provenance (track id, detector id, ...)
};

/// Dense T x H x W x C feature map.
class FeatureVolume {
public:
    FeatureVolume() = default;
    FeatureVolume(std::size_t t, std::size_t h, std::size_t w, std::size_t channels)
        : t_(t), h_(h), w_(w), c_(channels), data_(t * h * w * channels, 0.0) {}

    std::size_t t_dim() const { return t_; }
    std::size_t h_dim() const { return h_; }
    std::size_t w_dim() const { return w_; }
    std::size_t channels() const { return c_; }

    double& at(std::size_t t, std::size_t y, std::size_t x, std::size_t ch) {
        return data_[((t * h_ + y) * w_ + x) * c_ + ch];
    }
    double at(std::size_t t, std::size_t y, std::size_t x, std::size_t ch) const {
        return data_[((t * h_ + y) * w_ + x) * c_ + ch];
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    /// Channelwise mean over all T*H*W cells (the whole-video global feature).
    Vector global_mean() const {
        if (data_.empty()) throw ShapeError("FeatureVolume::global_mean: empty volume");
        Vector out(c_, 0.0);
        const std::size_t cells = t_ * h_ * w_;
        for (std::size_t cell = 0; cell < cells; ++cell)
            for (std::size_t ch = 0; ch < c_; ++ch) out[ch] += data_[cell * c_ + ch];
        for (double& v : out) v /= static_cast<double>(cells);
        return out;
    }

private:
    std::size_t t_ = 0, h_ = 0, w_ = 0, c_ = 0;
    std::vector<double> data_;
};

/// Intersection area over union area, in [0, 1]. Two zero-area boxes give 0.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

/// How input-frame boxes map onto the feature map.
struct BoxProjection {
    int input_frames = 32;
    int feature_frames = 16;      // must divide input_frames
    double spatial_stride = 16.0; // input pixels per feature cell
    double fm_width = 14.0;       // feature-map spatial bounds used for clipping
    double fm_height = 14.0;
};

/// One box that could not be projected (fell entirely outside the map).
struct DroppedBox {
    std::size_t index = 0;    // position in the input list
    std::string reason;
};

struct ProjectedBoxes {
    std::vector<std::pair<int, BoundingBox>> boxes;  // (feature_frame, box)
    std::vector<DroppedBox> dropped;
};

/// Projects (input_frame, box) pairs onto feature-frame coordinates:
/// temporal index divided by the temporal stride, spatial coordinates divided
/// by the spatial stride, boxes clipped to the feature-map bounds. Boxes
/// entirely outside the map are dropped with a warning record.
inline ProjectedBoxes project_boxes(const std::vector<std::pair<int, BoundingBox>>& boxes,
                                    const BoxProjection& proj) {
    if (proj.feature_frames <= 0 || proj.input_frames % proj.feature_frames != 0)
        throw ShapeError("project_boxes: input_frames " + std::to_string(proj.input_frames) +
                         " not divisible by feature_frames " + std::to_string(proj.feature_frames));
    if (!(proj.spatial_stride > 0.0))
        throw ShapeError("project_boxes: spatial_stride must be positive");
    const int tstride = proj.input_frames / proj.feature_frames;
    ProjectedBoxes out;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& [input_frame, box] = boxes[i];
        const int frame = input_frame / tstride;
        BoundingBox p{box.x1 / proj.spatial_stride, box.y1 / proj.spatial_stride,
                      box.x2 / proj.spatial_stride, box.y2 / proj.spatial_stride};
        if (frame < 0 || frame >= proj.feature_frames || p.x1 >= proj.fm_width ||
            p.y1 >= proj.fm_height || p.x2 <= 0.0 || p.y2 <= 0.0) {
            out.dropped.push_back({i, "box outside feature map after projection"});
            continue;
        }
        p.x1 = std::clamp(p.x1, 0.0, proj.fm_width);
        p.x2 = std::clamp(p.x2, 0.0, proj.fm_width);
        p.y1 = std::clamp(p.y1, 0.0, proj.fm_height);
        p.y2 = std::clamp(p.y2, 0.0, proj.fm_height);
        out.boxes.emplace_back(frame, p);
    }
    return out;
}

namespace detail {

/// Bilinear sample of one channel at continuous (x, y) on frame t.
/// Grid values sit at integer coordinates; samples are clamped to the border.
inline double bilinear(const FeatureVolume& v, std::size_t t, double y, double x, std::size_t ch) {
    const double max_x = static_cast<double>(v.w_dim() - 1);
    const double max_y = static_cast<double>(v.h_dim() - 1);
    x = std::clamp(x, 0.0, max_x);
    y = std::clamp(y, 0.0, max_y);
    const std::size_t x0 = static_cast<std::size_t>(x);
    const std::size_t y0 = static_cast<std::size_t>(y);
    const std::size_t x1 = std::min(x0 + 1, v.w_dim() - 1);
    const std::size_t y1 = std::min(y0 + 1, v.h_dim() - 1);
    const double fx = x - static_cast<double>(x0);
    const double fy = y - static_cast<double>(y0);
    const double top = v.at(t, y0, x0, ch) * (1.0 - fx) + v.at(t, y0, x1, ch) * fx;
    const double bot = v.at(t, y1, x0, ch) * (1.0 - fx) + v.at(t, y1, x1, ch) * fx;
    return top * (1.0 - fy) + bot * fy;
}

}  // namespace detail

/// Simplified RoIAlign. The box is split into bins x bins equal cells; each
/// cell averages samples_per_bin^2 bilinear samples at cell-interior points;
/// the result is the channelwise maximum over the bin grid (7x7 -> 1x1xd).
/// A zero-area box degenerates to sampling the feature at the box's point.
inline Vector roi_align(const FeatureVolume& volume, int frame, const BoundingBox& box,
                        std::size_t bins = 7, std::size_t samples_per_bin = 1) {
    if (frame < 0 || static_cast<std::size_t>(frame) >= volume.t_dim())
        throw ShapeError("roi_align: frame " + std::to_string(frame) + " outside volume T=" +
                         std::to_string(volume.t_dim()));
    if (bins == 0 || samples_per_bin == 0)
        throw ShapeError("roi_align: bins and samples_per_bin must be positive");
    const std::size_t t = static_cast<std::size_t>(frame);
    const std::size_t C = volume.channels();

    if (box.area() <= 0.0) {
        Vector out(C);
        for (std::size_t ch = 0; ch < C; ++ch)
            out[ch] = detail::bilinear(volume, t, box.y1, box.x1, ch);
        return out;
    }

    const double cell_w = box.width() / static_cast<double>(bins);
    const double cell_h = box.height() / static_cast<double>(bins);
    const double n_samples = static_cast<double>(samples_per_bin * samples_per_bin);

    Vector out(C, -std::numeric_limits<double>::infinity());
    for (std::size_t by = 0; by < bins; ++by) {
        for (std::size_t bx = 0; bx < bins; ++bx) {
            const double cy0 = box.y1 + cell_h * static_cast<double>(by);
            const double cx0 = box.x1 + cell_w * static_cast<double>(bx);
            for (std::size_t ch = 0; ch < C; ++ch) {
                double acc = 0.0;
                for (std::size_t sy = 0; sy < samples_per_bin; ++sy) {
                    const double y = cy0 + cell_h * (static_cast<double>(sy) + 0.5) /
                                               static_cast<double>(samples_per_bin);
                    for (std::size_t sx = 0; sx < samples_per_bin; ++sx) {
                        const double x = cx0 + cell_w * (static_cast<double>(sx) + 0.5) /
                                                   static_cast<double>(samples_per_bin);
                        acc += detail::bilinear(volume, t, y, x, ch);
                    }
                }
                out[ch] = std::max(out[ch], acc / n_samples);
            }
        }
    }
    return out;
}

}  // namespace strg
