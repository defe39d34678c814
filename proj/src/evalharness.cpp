#include "curio/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "curio/errors.hpp"
#include "curio/rng.hpp"

namespace curio {

std::pair<double, double> precision_recall_at_k(std::span<const ItemId> recommended,
                                                const std::set<ItemId>& relevant, int k) {
    if (k < 1) throw ArgumentError("precision_recall_at_k: k must be positive");
    if (static_cast<std::size_t>(k) > recommended.size())
        throw ArgumentError("precision_recall_at_k: k exceeds the recommended list");
    if (relevant.empty()) throw ArgumentError("precision_recall_at_k: empty relevant set");

    std::size_t hits = 0;
    for (int i = 0; i < k; ++i)
        if (relevant.count(recommended[i])) ++hits;
    const double precision = static_cast<double>(hits) / static_cast<double>(k);
    const double recall = static_cast<double>(hits) / static_cast<double>(relevant.size());
    return {precision, recall};
}

double unexp_at_k(std::span<const RecommendationList> lists, int k) {
    if (lists.empty()) throw ArgumentError("unexp_at_k: no recommendation lists");
    double user_sum = 0.0;
    for (const auto& list : lists) {
        if (static_cast<std::size_t>(k) > list.ranked.size())
            throw ArgumentError("unexp_at_k: k exceeds a user's list");
        double s = 0.0;
        for (int i = 0; i < k; ++i) s += list.ranked[i].unexp;
        user_sum += s / static_cast<double>(k);
    }
    return user_sum / static_cast<double>(lists.size());
}

double auc_from_scores(std::span<const double> positive_scores,
                       std::span<const double> negative_scores) {
    if (positive_scores.empty() || negative_scores.empty())
        throw ArgumentError("auc_from_scores: both classes must be non-empty");
    double wins = 0.0;
    for (double p : positive_scores) {
        for (double n : negative_scores) {
            if (p > n)
                wins += 1.0;
            else if (p == n)
                wins += 0.5;
        }
    }
    return wins / (static_cast<double>(positive_scores.size()) *
                   static_cast<double>(negative_scores.size()));
}

EvalReport compare_strategies(std::span<const UserEvalInput> inputs, std::span<const int> ks) {
    if (inputs.empty()) throw ArgumentError("compare_strategies: no users");

    EvalReport report;
    report.strategies = {"curiosity", "fixed_0.5", "useful_only", "unexp_only"};
    report.user_count = inputs.size();
    report.unexp_min = std::numeric_limits<double>::infinity();
    report.unexp_max = -std::numeric_limits<double>::infinity();
    for (const auto& in : inputs) {
        for (const auto& c : in.candidates) {
            report.unexp_min = std::min(report.unexp_min, c.unexp);
            report.unexp_max = std::max(report.unexp_max, c.unexp);
        }
    }

    const int max_k = *std::max_element(ks.begin(), ks.end());
    for (const auto& name : report.strategies) {
        std::map<int, MetricRow> per_k;
        std::vector<RecommendationList> lists;
        lists.reserve(inputs.size());
        for (const auto& in : inputs) {
            CuriosityProfile profile;
            profile.user_id = in.user_id;
            if (name == "curiosity")
                profile.curiosity = in.curiosity;
            else if (name == "fixed_0.5")
                profile.curiosity = 0.5;
            else if (name == "useful_only")
                profile.curiosity = 0.0;
            else
                profile.curiosity = 1.0;
            const int n = std::min<int>(static_cast<int>(in.candidates.size()),
                                        std::max(max_k, 1));
            lists.push_back(rerank(profile, in.candidates, n));
        }
        for (int k : ks) {
            MetricRow row;
            double psum = 0.0, rsum = 0.0;
            for (std::size_t u = 0; u < inputs.size(); ++u) {
                std::vector<ItemId> recommended;
                recommended.reserve(lists[u].ranked.size());
                for (const auto& sc : lists[u].ranked) recommended.push_back(sc.item_id);
                const auto [p, r] = precision_recall_at_k(recommended, inputs[u].relevant, k);
                psum += p;
                rsum += r;
            }
            row.precision = psum / static_cast<double>(inputs.size());
            row.recall = rsum / static_cast<double>(inputs.size());
            row.unexp = unexp_at_k(lists, k);
            per_k.emplace(k, row);
        }
        report.rows.emplace(name, std::move(per_k));
    }
    return report;
}

std::vector<std::size_t> curiosity_histogram(std::span<const CuriosityProfile> profiles) {
    std::vector<std::size_t> bins(10, 0);
    for (const auto& p : profiles) {
        int b = static_cast<int>(p.curiosity * 10.0);
        if (b > 9) b = 9;
        if (b < 0) b = 0;
        ++bins[b];
    }
    return bins;
}

std::vector<SweepResult> sweep_x(
    std::span<const int> x_values,
    const std::function<std::vector<CuriosityProfile>(int x, std::uint64_t seed)>& run_for_x,
    std::uint64_t seed) {
    std::vector<SweepResult> results;
    for (int x : x_values) {
        SweepResult r;
        r.x = x;
        try {
            r.profiles = run_for_x(x, derive_seed(seed, "sweep:x:" + std::to_string(x)));
            r.histogram = curiosity_histogram(r.profiles);
        } catch (const std::exception& e) {
            r.error = e.what();  // record and continue with the other x values
        }
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace curio
