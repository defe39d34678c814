#ifndef CURIO_PIPELINE_HPP
#define CURIO_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "curio/corpus.hpp"
#include "curio/evalharness.hpp"
#include "curio/factorization.hpp"
#include "curio/relevance.hpp"
#include "curio/sequence.hpp"
#include "curio/types.hpp"

namespace curio {

// Everything the CLI needs to run the pipeline; loadable from a plain
// key = value file, flags override individual keys.
struct PipelineConfig {
    std::string ratings_path;
    std::string movies_path;
    std::string out_dir = "out";
    int x = 30;
    std::vector<int> k_list = {5, 10, 15, 20};
    std::vector<int> sweep_x_values = {5, 10, 15, 20, 25, 30};
    std::uint64_t seed = 42;
    int threads = 1;
    int top_n = 20;
    std::size_t max_users = 0;  // 0 keeps every user; otherwise a seeded subsample
    MfHyper mf;
    SeqHyper seq;
    CtrHyper ctr;

    static PipelineConfig from_file(const std::filesystem::path& path);
    void set_key(const std::string& key, const std::string& value);

    // Sorted key=value lines. Thread count and output directory are left
    // out so they never change artifact contents.
    std::string canonical() const;
    std::string config_hash() const;
};

// Stage runner; artifacts live under config.out_dir and every stage skips
// itself when its snapshot matches the current config hash (unless forced).
class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);

    const PipelineConfig& config() const { return cfg_; }

    void ingest(bool force = false);
    void train_mf(bool force = false);
    void train_seq(bool force = false);
    void train_ctr(bool force = false);
    void curiosity(bool force = false);
    void recommend(bool force = false);
    void evaluate(bool force = false);
    void sweep(bool force = false);
    void run(bool force = false);

    std::string inspect_user(UserId user_id) const;

    // Debug export: the user's mean-shift history clustering as
    // clusters_<user>.json (centroids, counts, bandwidth).
    void dump_clusters(UserId user_id) const;

    // Mean per-user AUC on the validation pools (1 positive vs 9 negatives).
    static double validation_auc(const CtrModel& model, const SplitDataset& split,
                                 int max_history);

    std::filesystem::path artifact(const std::string& name) const;

private:
    PipelineConfig cfg_;
    std::filesystem::path out_;

    bool stage_fresh(const std::string& stage,
                     const std::vector<std::string>& artifacts) const;
    void write_stage_meta(const std::string& stage) const;
    void require_artifacts(const std::string& stage_label,
                           const std::vector<std::string>& artifacts) const;

    SplitDataset load_split() const;
    std::vector<CuriosityProfile> compute_profiles(const SplitDataset& split,
                                                   const FactorModel& mf,
                                                   const SequenceModel& seq, int x) const;
    std::vector<CuriosityProfile> read_profiles() const;
};

}  // namespace curio

#endif
