#include "fsskit/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>

namespace fsskit {

namespace {

double pooled_iou(std::uint64_t intersection, std::uint64_t union_count) {
    if (union_count == 0) return 1.0;  // vacuous: nothing predicted, nothing to find
    return static_cast<double>(intersection) / static_cast<double>(union_count);
}

}  // namespace

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& target) {
    require_same_grid(pred, target, "confusion");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.flat(i), t = target.flat(i);
        c.intersection += (p && t);
        c.union_count += (p || t);
        c.pred_area += p;
        c.target_area += t;
    }
    return c;
}

ConfusionCounts confusion_background(const BinaryMask& pred, const BinaryMask& target) {
    require_same_grid(pred, target, "confusion_background");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = !pred.flat(i), t = !target.flat(i);
        c.intersection += (p && t);
        c.union_count += (p || t);
        c.pred_area += p;
        c.target_area += t;
    }
    return c;
}

double iou(const BinaryMask& pred, const BinaryMask& target) {
    const ConfusionCounts c = confusion(pred, target);
    return pooled_iou(c.intersection, c.union_count);
}

double fb_iou(std::span<const std::pair<BinaryMask, BinaryMask>> episodes) {
    if (episodes.empty())
        throw ConfigError("fb_iou: need at least one episode");
    std::uint64_t inter = 0, uni = 0;
    for (const auto& [pred, target] : episodes) {
        const ConfusionCounts fg = confusion(pred, target);
        const ConfusionCounts bg = confusion_background(pred, target);
        inter += fg.intersection + bg.intersection;
        uni += fg.union_count + bg.union_count;
    }
    return pooled_iou(inter, uni);
}

double prior_cross_entropy(const PriorMap& prior, const BinaryMask& target,
                           double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 0.5))
        throw ConfigError("prior_cross_entropy: epsilon must lie in (0, 0.5)");
    const Tensor& g = prior.grid;
    if (g.rank() != 3 || g.dim(0) != 1 || g.dim(1) != target.height() ||
        g.dim(2) != target.width())
        throw DimensionError("prior_cross_entropy: prior " + g.shape().str() +
                             " vs target " + std::to_string(target.height()) + "x" +
                             std::to_string(target.width()));
    const std::size_t n = target.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double p = static_cast<double>(g.data()[i]);
        if (p < epsilon) p = epsilon;
        if (p > 1.0 - epsilon) p = 1.0 - epsilon;
        acc += target.flat(i) ? std::log(p) : std::log(1.0 - p);
    }
    return -acc / static_cast<double>(n);
}

MetricSummary aggregate(std::span<const EpisodeMetrics> per_episode) {
    if (per_episode.empty())
        throw ConfigError("aggregate: need at least one episode record");

    // per-class pooled counts, ordered for determinism
    std::map<int, ConfusionCounts> per_class;
    std::uint64_t fb_inter = 0, fb_union = 0;
    double ce_sum = 0.0;
    for (const EpisodeMetrics& e : per_episode) {
        ConfusionCounts& c = per_class[e.class_id];
        c.intersection += e.fg.intersection;
        c.union_count += e.fg.union_count;
        c.pred_area += e.fg.pred_area;
        c.target_area += e.fg.target_area;
        fb_inter += e.fg.intersection + e.bg.intersection;
        fb_union += e.fg.union_count + e.bg.union_count;
        ce_sum += e.prior_ce;
    }

    MetricSummary s;
    s.episode_count = per_episode.size();
    double iou_sum = 0.0;
    for (const auto& [cls, c] : per_class)
        iou_sum += pooled_iou(c.intersection, c.union_count);
    s.miou = iou_sum / static_cast<double>(per_class.size());
    s.fb_iou = pooled_iou(fb_inter, fb_union);
    s.prior_ce_mean = ce_sum / static_cast<double>(per_episode.size());

    double var = 0.0;
    for (const EpisodeMetrics& e : per_episode) {
        const double d = e.prior_ce - s.prior_ce_mean;
        var += d * d;
    }
    s.prior_ce_std = std::sqrt(var / static_cast<double>(per_episode.size()));
    return s;
}

nlohmann::json to_json(const MetricSummary& s) {
    return nlohmann::json{{"miou", s.miou},
                          {"fb_iou", s.fb_iou},
                          {"ce_mean", s.prior_ce_mean},
                          {"ce_std", s.prior_ce_std},
                          {"episode_count", s.episode_count}};
}

std::string to_csv_row(const MetricSummary& s, const std::string& fold) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%zu", fold.c_str(), s.miou,
                  s.fb_iou, s.prior_ce_mean, s.prior_ce_std, s.episode_count);
    return buf;
}

}  // namespace fsskit
