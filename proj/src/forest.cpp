#include "motionid/forest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "motionid/errors.hpp"
#include "motionid/rng.hpp"
#include "motionid/util.hpp"

namespace motionid {

namespace {

// Order-preserving float32 -> uint32 map so split candidates radix-sort as
// plain integers. Negative zero is folded into positive zero first, otherwise
// the two would count as distinct split keys for equal values.
uint32_t encode_key(float v) {
    if (v == 0.0f) v = 0.0f;
    uint32_t s = std::bit_cast<uint32_t>(v);
    return (s & 0x80000000u) ? ~s : (s | 0x80000000u);
}

float decode_key(uint32_t key) {
    uint32_t s = (key & 0x80000000u) ? (key & 0x7fffffffu) : ~key;
    return std::bit_cast<float>(s);
}

// (key, item) pairs packed so one integer sort orders both.
uint64_t pack(uint32_t key, uint32_t item) { return (static_cast<uint64_t>(key) << 32) | item; }

// diff carries the OR of all pairwise key differences in data. A byte that
// never varies would sort as a stable identity pass, so it is skipped.
void radix_sort_keys(std::vector<uint64_t>& data, std::vector<uint64_t>& scratch, uint32_t diff) {
    scratch.resize(data.size());
    for (int pass = 0; pass < 4; ++pass) {
        if (((diff >> (8 * pass)) & 0xffu) == 0) continue;
        int shift = 32 + 8 * pass;
        size_t buckets[256] = {};
        for (uint64_t v : data) ++buckets[(v >> shift) & 0xff];
        size_t offset = 0;
        for (size_t& b : buckets) {
            size_t count = b;
            b = offset;
            offset += count;
        }
        for (uint64_t v : data) scratch[buckets[(v >> shift) & 0xff]++] = v;
        data.swap(scratch);
    }
}

void sort_pairs(std::vector<uint64_t>& data, std::vector<uint64_t>& scratch, uint32_t diff) {
    if (data.size() < 64) {
        std::sort(data.begin(), data.end());
    } else {
        radix_sort_keys(data, scratch, diff);
    }
}

struct Bootstrap {
    std::vector<uint32_t> items;    // distinct training-row positions
    std::vector<uint32_t> weights;  // how often each was drawn
};

Bootstrap draw_bootstrap(size_t n_rows, size_t n_draw, Rng rng) {
    std::vector<uint32_t> counts(n_rows, 0);
    for (size_t i = 0; i < n_draw; ++i) ++counts[rng.next_below(n_rows)];
    Bootstrap b;
    for (size_t i = 0; i < n_rows; ++i) {
        if (counts[i] > 0) {
            b.items.push_back(static_cast<uint32_t>(i));
            b.weights.push_back(counts[i]);
        }
    }
    return b;
}

// All state one tree build needs, reused across nodes to avoid reallocation.
class TreeBuilder {
  public:
    TreeBuilder(const std::vector<uint32_t>& keys, size_t n_rows,
                const std::vector<int32_t>& labels, const Bootstrap& boot, size_t n_classes,
                size_t n_features, const ForestParams& params, Rng rng)
        : keys_(keys),
          n_rows_(n_rows),
          labels_(labels),
          boot_(boot),
          n_classes_(n_classes),
          params_(params),
          rng_(rng),
          feat_perm_(n_features),
          class_weight_(n_classes) {
        mtry_ = std::max<size_t>(
            1, static_cast<size_t>(std::sqrt(static_cast<double>(n_features))));
        for (size_t f = 0; f < n_features; ++f) feat_perm_[f] = f;
        row_weight_.assign(n_rows_, 0.0);
        for (size_t i = 0; i < boot_.items.size(); ++i) {
            row_weight_[boot_.items[i]] = boot_.weights[i];
        }
    }

    Tree build() {
        size_t n = boot_.items.size();
        order_.assign(boot_.items.begin(), boot_.items.end());

        tree_.nodes.emplace_back();
        std::vector<Pending> stack = {{0, 0, static_cast<uint32_t>(n), 0}};
        while (!stack.empty()) {
            Pending p = stack.back();
            stack.pop_back();
            grow(p, stack);
        }
        return std::move(tree_);
    }

  private:
    struct Pending {
        int32_t node;
        uint32_t begin, end;
        int depth;
    };

    uint32_t key_at(size_t feature, uint32_t row) const {
        return keys_[feature * n_rows_ + row];
    }

    void make_leaf(int32_t node) {
        int32_t best = 0;
        for (size_t c = 1; c < n_classes_; ++c) {
            if (class_weight_[c] > class_weight_[best]) best = static_cast<int32_t>(c);
        }
        tree_.nodes[node].leaf = static_cast<int32_t>(tree_.leaf_class.size());
        tree_.leaf_class.push_back(best);
    }

    void grow(const Pending& p, std::vector<Pending>& stack) {
        double total_w = 0.0;
        std::fill(class_weight_.begin(), class_weight_.end(), 0.0);
        for (uint32_t i = p.begin; i < p.end; ++i) {
            uint32_t row = order_[i];
            class_weight_[labels_[row]] += row_weight_[row];
            total_w += row_weight_[row];
        }
        bool pure = false;
        for (double w : class_weight_) {
            if (w == total_w) pure = true;
        }
        if (pure || total_w < params_.min_split || p.end - p.begin < 2 ||
            (params_.max_depth > 0 && p.depth >= params_.max_depth)) {
            make_leaf(p.node);
            return;
        }

        double parent_score = 0.0;
        for (double w : class_weight_) parent_score += w * w;
        parent_score /= total_w;

        // Candidate features, a fresh uniform subset each node. Partial
        // Fisher-Yates is uniform from any starting permutation, so the
        // buffer is never reset between nodes.
        for (size_t i = 0; i < mtry_; ++i) {
            size_t j = i + rng_.next_below(feat_perm_.size() - i);
            std::swap(feat_perm_[i], feat_perm_[j]);
        }

        double best_score = parent_score + 1e-12;
        int32_t best_feature = -1;
        uint32_t best_left = 0;
        uint32_t best_key = 0;
        left_w_.assign(n_classes_, 0.0);
        right_w_.assign(n_classes_, 0.0);

        for (size_t ci = 0; ci < mtry_; ++ci) {
            size_t f = feat_perm_[ci];
            pairs_.clear();
            const uint32_t* col = &keys_[f * n_rows_];
            uint32_t first = col[order_[p.begin]];
            uint32_t diff = 0;
            for (uint32_t i = p.begin; i < p.end; ++i) {
                uint32_t row = order_[i];
                uint32_t k = col[row];
                diff |= k ^ first;
                pairs_.push_back(pack(k, row));
            }
            if (diff == 0) continue;
            sort_pairs(pairs_, pair_scratch_, diff);

            std::fill(left_w_.begin(), left_w_.end(), 0.0);
            for (size_t c = 0; c < n_classes_; ++c) right_w_[c] = class_weight_[c];
            double sum_l2 = 0.0;
            double sum_r2 = parent_score * total_w;
            double weight_l = 0.0;
            double cand_score = best_score;
            uint32_t cand_left = 0;
            uint32_t cand_key = 0;
            for (size_t i = 0; i + 1 < pairs_.size(); ++i) {
                uint32_t row = static_cast<uint32_t>(pairs_[i]);
                int32_t c = labels_[row];
                double w = row_weight_[row];
                sum_l2 += w * (2.0 * left_w_[c] + w);
                sum_r2 += w * (w - 2.0 * right_w_[c]);
                left_w_[c] += w;
                right_w_[c] -= w;
                weight_l += w;
                uint32_t key = static_cast<uint32_t>(pairs_[i] >> 32);
                uint32_t next_key = static_cast<uint32_t>(pairs_[i + 1] >> 32);
                if (key == next_key) continue;
                double score = sum_l2 / weight_l + sum_r2 / (total_w - weight_l);
                if (score > cand_score) {
                    cand_score = score;
                    cand_left = static_cast<uint32_t>(i + 1);
                    cand_key = key;
                }
            }
            if (cand_score > best_score) {
                best_score = cand_score;
                best_feature = static_cast<int32_t>(f);
                best_left = cand_left;
                best_key = cand_key;
                pairs_.swap(best_pairs_);
            }
        }

        if (best_feature < 0) {
            make_leaf(p.node);
            return;
        }

        // The winning sort already carries the partition.
        for (size_t i = 0; i < best_pairs_.size(); ++i) {
            order_[p.begin + i] = static_cast<uint32_t>(best_pairs_[i]);
        }
        uint32_t mid = p.begin + best_left;

        TreeNode& node = tree_.nodes[p.node];
        node.feature = best_feature;
        node.threshold = static_cast<double>(decode_key(best_key));
        node.left = static_cast<int32_t>(tree_.nodes.size());
        node.right = node.left + 1;
        tree_.nodes.emplace_back();
        tree_.nodes.emplace_back();
        stack.push_back({node.right, mid, p.end, p.depth + 1});
        stack.push_back({node.left, p.begin, mid, p.depth + 1});
    }

    const std::vector<uint32_t>& keys_;
    size_t n_rows_;
    const std::vector<int32_t>& labels_;
    const Bootstrap& boot_;
    size_t n_classes_;
    const ForestParams& params_;
    Rng rng_;
    size_t mtry_ = 1;

    std::vector<uint32_t> order_;       // sampled training rows, node-contiguous
    std::vector<double> row_weight_;    // bootstrap multiplicity, zero when unsampled
    std::vector<size_t> feat_perm_;
    std::vector<double> class_weight_, left_w_, right_w_;
    std::vector<uint64_t> pairs_, pair_scratch_, best_pairs_;
    Tree tree_;
};

void append_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& out, uint64_t v) {
    append_u32(out, static_cast<uint32_t>(v));
    append_u32(out, static_cast<uint32_t>(v >> 32));
}

void append_i32(std::string& out, int32_t v) { append_u32(out, static_cast<uint32_t>(v)); }

void append_f64(std::string& out, double v) { append_u64(out, std::bit_cast<uint64_t>(v)); }

void append_string(std::string& out, const std::string& s) {
    append_u64(out, s.size());
    out += s;
}

struct ModelReader {
    const std::string& data;
    const std::string& path;
    size_t pos = 0;

    void need(size_t n) {
        if (data.size() - pos < n) throw DataError(path + ": truncated model file");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        }
        pos += 4;
        return v;
    }
    uint64_t u64() {
        uint64_t lo = u32();
        return lo | (static_cast<uint64_t>(u32()) << 32);
    }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        uint64_t n = u64();
        if (n > data.size()) throw DataError(path + ": truncated model file");
        need(n);
        std::string s = data.substr(pos, n);
        pos += n;
        return s;
    }
};

constexpr char kModelMagic[4] = {'M', 'I', 'F', 'R'};
constexpr uint32_t kModelVersion = 1;

}  // namespace

std::string ForestParams::summary() const {
    return "trees_per_draw=" + std::to_string(trees_per_draw) +
           ";n_draws=" + std::to_string(n_draws) +
           ";rows_per_draw=" + std::to_string(rows_per_draw) +
           ";max_depth=" + std::to_string(max_depth) + ";min_split=" + std::to_string(min_split) +
           ";seed=" + std::to_string(seed);
}

int32_t Tree::predict(const double* row) const {
    int32_t i = 0;
    while (nodes[i].feature >= 0) {
        const TreeNode& n = nodes[i];
        i = static_cast<float>(row[n.feature]) <= static_cast<float>(n.threshold) ? n.left
                                                                                  : n.right;
    }
    return leaf_class[nodes[i].leaf];
}

std::vector<double> Forest::vote_row(const double* row) const {
    std::vector<double> votes(classes.size(), 0.0);
    for (const Tree& t : trees) votes[t.predict(row)] += 1.0;
    for (double& v : votes) v /= trees.size();
    return votes;
}

Forest train_forest(const FeatureMatrix& matrix, const std::vector<size_t>& rows,
                    const std::vector<int32_t>& labels, const std::vector<std::string>& classes,
                    const ForestParams& params) {
    if (rows.empty()) throw DataError("training set is empty");
    if (labels.size() != rows.size()) throw InternalError("label count does not match row count");
    if (classes.size() < 2) throw DataError("training set needs at least two classes");
    if (params.trees_per_draw < 1 || params.n_draws < 1 || params.rows_per_draw < 1) {
        throw ConfigError("forest sizes must be positive");
    }
    for (int32_t l : labels) {
        if (l < 0 || static_cast<size_t>(l) >= classes.size()) {
            throw InternalError("training label out of range");
        }
    }

    size_t n = rows.size();
    size_t n_features = matrix.columns.size();
    std::vector<uint32_t> keys(n_features * n);
    for (size_t i = 0; i < n; ++i) {
        std::span<const double> row = matrix.row(rows[i]);
        for (size_t f = 0; f < n_features; ++f) {
            if (!std::isfinite(row[f])) throw DataError("non-finite feature value in training row");
            keys[f * n + i] = encode_key(static_cast<float>(row[f]));
        }
    }

    Rng root(params.seed);
    size_t n_draw = std::min(params.rows_per_draw, n);
    std::vector<Bootstrap> bootstraps;
    for (int d = 0; d < params.n_draws; ++d) {
        bootstraps.push_back(draw_bootstrap(n, n_draw, root.derive("bootstrap", d)));
    }

    Forest forest;
    forest.classes = classes;
    forest.columns = matrix.columns;
    forest.column_digest = matrix.column_digest();
    forest.params = params;
    forest.trees.resize(params.total_trees());

    int total = params.total_trees();
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < total; ++t) {
        const Bootstrap& boot = bootstraps[t / params.trees_per_draw];
        TreeBuilder builder(keys, n, labels, boot, classes.size(), n_features, params,
                            root.derive("tree", t));
        forest.trees[t] = builder.build();
    }
    return forest;
}

PredictionMatrix predict_units(const Forest& forest, const FeatureMatrix& matrix,
                               const std::vector<TestUnit>& units) {
    if (matrix.column_digest() != forest.column_digest) {
        throw DataError("feature schema does not match the model");
    }
    size_t k = forest.classes.size();
    PredictionMatrix out;
    out.classes = forest.classes;
    out.rows.resize(units.size());
    out.scores.assign(units.size() * k, 0.0);

    for (size_t u = 0; u < units.size(); ++u) {
        if (units[u].rows.empty()) throw DataError("test unit has no feature rows");
        out.rows[u] = units[u].id;
    }

#pragma omp parallel for schedule(dynamic)
    for (long u = 0; u < static_cast<long>(units.size()); ++u) {
        double* scores = &out.scores[u * k];
        for (size_t r : units[u].rows) {
            const double* row = matrix.row(r).data();
            for (const Tree& t : forest.trees) scores[t.predict(row)] += 1.0;
        }
        double total = static_cast<double>(units[u].rows.size()) * forest.trees.size();
        for (size_t c = 0; c < k; ++c) scores[c] /= total;
    }
    out.check_valid();
    return out;
}

void save_forest(const Forest& forest, const std::string& path) {
    std::string out;
    out.append(kModelMagic, 4);
    append_u32(out, kModelVersion);
    append_u64(out, forest.column_digest);
    append_i32(out, forest.params.trees_per_draw);
    append_i32(out, forest.params.n_draws);
    append_u64(out, forest.params.rows_per_draw);
    append_i32(out, forest.params.max_depth);
    append_u64(out, forest.params.min_split);
    append_u64(out, forest.params.seed);
    append_u64(out, forest.classes.size());
    for (const std::string& c : forest.classes) append_string(out, c);
    append_u64(out, forest.columns.size());
    for (const std::string& c : forest.columns) append_string(out, c);
    append_u64(out, forest.trees.size());
    for (const Tree& t : forest.trees) {
        append_u64(out, t.nodes.size());
        for (const TreeNode& n : t.nodes) {
            append_i32(out, n.feature);
            append_f64(out, n.threshold);
            append_i32(out, n.left);
            append_i32(out, n.right);
            append_i32(out, n.leaf);
        }
        append_u64(out, t.leaf_class.size());
        for (int32_t c : t.leaf_class) append_i32(out, c);
    }
    write_file(path, out);
}

Forest load_forest(const std::string& path) {
    std::string data = read_file(path);
    ModelReader r{data, path};
    r.need(4);
    if (std::memcmp(data.data(), kModelMagic, 4) != 0) {
        throw DataError(path + ": not a model file");
    }
    r.pos = 4;
    uint32_t version = r.u32();
    if (version != kModelVersion) {
        throw DataError(path + ": unsupported model version " + std::to_string(version));
    }

    Forest f;
    f.column_digest = r.u64();
    f.params.trees_per_draw = r.i32();
    f.params.n_draws = r.i32();
    f.params.rows_per_draw = r.u64();
    f.params.max_depth = r.i32();
    f.params.min_split = r.u64();
    f.params.seed = r.u64();
    uint64_t n_classes = r.u64();
    for (uint64_t i = 0; i < n_classes; ++i) f.classes.push_back(r.str());
    uint64_t n_columns = r.u64();
    for (uint64_t i = 0; i < n_columns; ++i) f.columns.push_back(r.str());
    uint64_t n_trees = r.u64();
    for (uint64_t i = 0; i < n_trees; ++i) {
        Tree t;
        uint64_t n_nodes = r.u64();
        if (n_nodes > data.size()) throw DataError(path + ": truncated model file");
        for (uint64_t j = 0; j < n_nodes; ++j) {
            TreeNode n;
            n.feature = r.i32();
            n.threshold = r.f64();
            n.left = r.i32();
            n.right = r.i32();
            n.leaf = r.i32();
            if (n.feature >= static_cast<int32_t>(n_columns)) {
                throw DataError(path + ": node feature out of range");
            }
            if (n.feature >= 0 && (n.left < 0 || n.right < 0 ||
                                   static_cast<uint64_t>(n.left) >= n_nodes ||
                                   static_cast<uint64_t>(n.right) >= n_nodes)) {
                throw DataError(path + ": node child out of range");
            }
            t.nodes.push_back(n);
        }
        uint64_t n_leaves = r.u64();
        if (n_leaves > data.size()) throw DataError(path + ": truncated model file");
        for (uint64_t j = 0; j < n_leaves; ++j) {
            int32_t c = r.i32();
            if (c < 0 || static_cast<uint64_t>(c) >= n_classes) {
                throw DataError(path + ": leaf class out of range");
            }
            t.leaf_class.push_back(c);
        }
        for (const TreeNode& n : t.nodes) {
            if (n.feature < 0 &&
                (n.leaf < 0 || static_cast<uint64_t>(n.leaf) >= t.leaf_class.size())) {
                throw DataError(path + ": leaf index out of range");
            }
        }
        f.trees.push_back(std::move(t));
    }
    if (r.pos != data.size()) throw DataError(path + ": trailing bytes after model");
    return f;
}

}  // namespace motionid
