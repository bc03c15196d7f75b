#include "onh/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "onh/common.hpp"
#include "onh/parallel.hpp"
#include "onh/rng.hpp"
#include "onh/text.hpp"

namespace onh {

void validate(const ForestParams& p) {
    if (p.n_trees < 1)
        throw Error("forest: n_trees must be >= 1");
    if (p.mtry < 1 || p.mtry > 2)
        throw Error("forest: mtry must be 1 or 2");
    if (p.min_leaf < 1)
        throw Error("forest: min_leaf must be >= 1");
    if (p.max_depth && *p.max_depth < 0)
        throw Error("forest: max_depth must be >= 0");
}

namespace {

constexpr int kNumFeatures = 2;

double gini(const std::array<double, kNumEyeClasses>& w, double total) {
    if (total <= 0.0)
        return 0.0;
    double sq = 0.0;
    for (double c : w)
        sq += (c / total) * (c / total);
    return 1.0 - sq;
}

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double decrease = -1.0;
};

struct TreeGrower {
    const std::vector<std::array<double, 2>>& X;
    const std::vector<int>& y;
    const std::array<double, kNumEyeClasses>& class_weight;
    const ForestParams& params;
    Rng& rng;
    Tree nodes;

    int grow(std::vector<int>& idx, int depth) {
        std::array<double, kNumEyeClasses> w{};
        for (int i : idx)
            w[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])] +=
                class_weight[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])];
        double total = 0.0;
        int classes_present = 0;
        for (double c : w) {
            total += c;
            classes_present += c > 0.0;
        }

        const int id = static_cast<int>(nodes.size());
        nodes.emplace_back();

        const bool depth_stop = params.max_depth && depth >= *params.max_depth;
        const bool size_stop = idx.size() < 2 * static_cast<std::size_t>(params.min_leaf);
        SplitChoice split;
        if (classes_present > 1 && !depth_stop && !size_stop)
            split = choose_split(idx, w, total);

        if (!split.found) {
            auto& leaf = nodes[static_cast<std::size_t>(id)];
            leaf.is_leaf = true;
            for (int c = 0; c < kNumEyeClasses; ++c)
                leaf.probs[static_cast<std::size_t>(c)] = w[static_cast<std::size_t>(c)] / total;
            return id;
        }

        std::vector<int> left_idx, right_idx;
        left_idx.reserve(idx.size());
        right_idx.reserve(idx.size());
        for (int i : idx) {
            if (X[static_cast<std::size_t>(i)][static_cast<std::size_t>(split.feature)] <
                split.threshold)
                left_idx.push_back(i);
            else
                right_idx.push_back(i);
        }
        idx.clear();
        idx.shrink_to_fit();

        const int left = grow(left_idx, depth + 1);
        const int right = grow(right_idx, depth + 1);
        auto& node = nodes[static_cast<std::size_t>(id)];
        node.is_leaf = false;
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        return id;
    }

    // Evaluates midpoint thresholds of the mtry sampled features; when none of
    // the sampled features varies within the node, the remaining features are
    // searched so a splittable node never turns into an impure leaf.
    SplitChoice choose_split(const std::vector<int>& idx,
                             const std::array<double, kNumEyeClasses>& node_w,
                             double node_total) {
        std::array<bool, kNumFeatures> sampled{};
        if (params.mtry >= kNumFeatures) {
            sampled.fill(true);
        } else {
            sampled[static_cast<std::size_t>(rng.bounded(kNumFeatures))] = true;
        }

        const double parent = node_total * gini(node_w, node_total);
        SplitChoice best;
        for (int pass = 0; pass < 2 && !best.found; ++pass) {
            for (int f = 0; f < kNumFeatures; ++f) {
                if (sampled[static_cast<std::size_t>(f)] == (pass == 1))
                    continue;
                scan_feature(f, idx, parent, best);
            }
        }
        return best;
    }

    void scan_feature(int f, const std::vector<int>& idx, double parent, SplitChoice& best) {
        struct Item {
            double v;
            int cls;
        };
        std::vector<Item> items;
        items.reserve(idx.size());
        for (int i : idx)
            items.push_back({X[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)],
                             y[static_cast<std::size_t>(i)]});
        std::sort(items.begin(), items.end(),
                  [](const Item& a, const Item& b) { return a.v < b.v; });

        std::array<double, kNumEyeClasses> left_w{};
        double left_total = 0.0;
        std::array<double, kNumEyeClasses> right_w{};
        double right_total = 0.0;
        for (const auto& it : items) {
            right_w[static_cast<std::size_t>(it.cls)] +=
                class_weight[static_cast<std::size_t>(it.cls)];
        }
        for (double c : right_w)
            right_total += c;

        const std::size_t n = items.size();
        for (std::size_t j = 0; j + 1 < n; ++j) {
            const double cw = class_weight[static_cast<std::size_t>(items[j].cls)];
            left_w[static_cast<std::size_t>(items[j].cls)] += cw;
            left_total += cw;
            right_w[static_cast<std::size_t>(items[j].cls)] -= cw;
            right_total -= cw;
            if (items[j].v == items[j + 1].v)
                continue;
            const std::size_t n_left = j + 1;
            const std::size_t n_right = n - n_left;
            if (n_left < static_cast<std::size_t>(params.min_leaf) ||
                n_right < static_cast<std::size_t>(params.min_leaf))
                continue;
            const double thr = items[j].v + (items[j + 1].v - items[j].v) / 2.0;
            // a midpoint collapsing onto an endpoint would misroute ties
            if (!(items[j].v < thr) || !(thr <= items[j + 1].v))
                continue;
            const double decrease =
                parent - left_total * gini(left_w, left_total) -
                right_total * gini(right_w, right_total);
            if (!best.found || decrease > best.decrease) {
                best.found = true;
                best.feature = f;
                best.threshold = thr;
                best.decrease = decrease;
            }
        }
    }
};

struct TrainingData {
    std::vector<std::array<double, 2>> X;
    std::vector<int> y;
    std::array<double, kNumEyeClasses> class_weight{};
    int classes_present = 0;
    int lone_class = 0;
};

TrainingData prepare(const std::vector<EyeFeatures>& features, const ForestParams& params) {
    if (features.empty())
        throw Error("forest: empty training set");
    TrainingData td;
    std::array<std::size_t, kNumEyeClasses> counts{};
    for (const auto& f : features) {
        validate(f);
        if (!f.true_class)
            throw Error("forest: training row '" + f.eye_id + "' has no true class");
        td.X.push_back(f.feature_vector());
        const int c = static_cast<int>(*f.true_class);
        td.y.push_back(c);
        ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < kNumEyeClasses; ++c)
        td.classes_present += counts[static_cast<std::size_t>(c)] > 0;
    for (int c = 0; c < kNumEyeClasses; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0)
            td.lone_class = c;
    }
    td.class_weight.fill(1.0);
    if (params.balanced_class_weights && td.classes_present > 1) {
        for (int c = 0; c < kNumEyeClasses; ++c) {
            const auto n_c = counts[static_cast<std::size_t>(c)];
            if (n_c > 0)
                td.class_weight[static_cast<std::size_t>(c)] =
                    static_cast<double>(features.size()) /
                    (static_cast<double>(td.classes_present) * static_cast<double>(n_c));
        }
    }
    return td;
}

const std::array<double, kNumEyeClasses>& leaf_for(const Tree& tree,
                                                   const std::array<double, 2>& x) {
    std::size_t node = 0;
    while (!tree[node].is_leaf) {
        const auto& n = tree[node];
        node = static_cast<std::size_t>(
            x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
    }
    return tree[node].probs;
}

ForestModel train_impl(const std::vector<EyeFeatures>& features, const ForestParams& params,
                       int n_threads, std::vector<std::vector<int>>* oob_out) {
    validate(params);
    TrainingData td = prepare(features, params);
    const std::size_t n = td.X.size();

    ForestModel model;
    model.params = params;
    model.rng_id = kRngId;
    model.trees.resize(static_cast<std::size_t>(params.n_trees));
    if (oob_out)
        oob_out->assign(static_cast<std::size_t>(params.n_trees), {});

    if (td.classes_present < 2) {
        log::warn("training set has a single class; forest degenerates to a constant model");
        Tree leaf_only(1);
        leaf_only[0].is_leaf = true;
        leaf_only[0].probs[static_cast<std::size_t>(td.lone_class)] = 1.0;
        for (auto& t : model.trees)
            t = leaf_only;
        return model;
    }

    parallel_for(static_cast<std::size_t>(params.n_trees), n_threads, [&](std::size_t t) {
        Rng rng(derive_seed(params.seed, "tree", t));
        std::vector<int> idx;
        idx.reserve(n);
        if (params.bootstrap) {
            std::vector<bool> in_bag(n, false);
            for (std::size_t i = 0; i < n; ++i) {
                const auto pick = rng.bounded(n);
                idx.push_back(static_cast<int>(pick));
                in_bag[pick] = true;
            }
            if (oob_out) {
                for (std::size_t i = 0; i < n; ++i)
                    if (!in_bag[i])
                        (*oob_out)[t].push_back(static_cast<int>(i));
            }
        } else {
            for (std::size_t i = 0; i < n; ++i)
                idx.push_back(static_cast<int>(i));
        }
        TreeGrower grower{td.X, td.y, td.class_weight, params, rng, {}};
        grower.grow(idx, 0);
        model.trees[t] = std::move(grower.nodes);
    });
    return model;
}

} // namespace

ForestModel train_forest(const std::vector<EyeFeatures>& features, const ForestParams& params,
                         int n_threads) {
    return train_impl(features, params, n_threads, nullptr);
}

TrainResult train_forest_with_oob(const std::vector<EyeFeatures>& features,
                                  const ForestParams& params, int n_threads) {
    TrainResult tr;
    tr.model = train_impl(features, params, n_threads, &tr.oob_indices);
    return tr;
}

double oob_accuracy(const TrainResult& trained, const std::vector<EyeFeatures>& features) {
    const auto& model = trained.model;
    if (trained.oob_indices.size() != model.trees.size())
        throw Error("oob_accuracy: out-of-bag bookkeeping does not match the forest");
    std::vector<std::array<double, kNumEyeClasses>> acc(features.size());
    std::vector<int> votes(features.size(), 0);
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        for (int i : trained.oob_indices[t]) {
            const auto& probs =
                leaf_for(model.trees[t], features[static_cast<std::size_t>(i)].feature_vector());
            for (int c = 0; c < kNumEyeClasses; ++c)
                acc[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] +=
                    probs[static_cast<std::size_t>(c)];
            ++votes[static_cast<std::size_t>(i)];
        }
    }
    std::size_t scored = 0, correct = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (votes[i] == 0)
            continue;
        if (!features[i].true_class)
            throw Error("oob_accuracy: row '" + features[i].eye_id + "' has no true class");
        int best = 0;
        for (int c = 1; c < kNumEyeClasses; ++c)
            if (acc[i][static_cast<std::size_t>(c)] > acc[i][static_cast<std::size_t>(best)])
                best = c;
        ++scored;
        correct += best == static_cast<int>(*features[i].true_class);
    }
    if (scored == 0)
        throw Error("oob_accuracy: no sample was ever out of bag");
    return static_cast<double>(correct) / static_cast<double>(scored);
}

std::array<double, kNumEyeClasses> predict_proba(const ForestModel& model,
                                                 const std::array<double, 2>& feature) {
    if (!std::isfinite(feature[0]) || !std::isfinite(feature[1]))
        throw Error("predict: feature values must be finite");
    if (model.trees.empty())
        throw Error("predict: model has no trees");
    std::array<double, kNumEyeClasses> sum{};
    for (const auto& tree : model.trees) {
        const auto& probs = leaf_for(tree, feature);
        for (int c = 0; c < kNumEyeClasses; ++c)
            sum[static_cast<std::size_t>(c)] += probs[static_cast<std::size_t>(c)];
    }
    for (auto& v : sum)
        v /= static_cast<double>(model.trees.size());
    return sum;
}

EyeClass predict_class(const ForestModel& model, const std::array<double, 2>& feature) {
    const auto p = predict_proba(model, feature);
    int best = 0;
    for (int c = 1; c < kNumEyeClasses; ++c)
        if (p[static_cast<std::size_t>(c)] > p[static_cast<std::size_t>(best)])
            best = c;
    return static_cast<EyeClass>(best);
}

void validate(const ForestModel& model) {
    validate(model.params);
    if (model.trees.size() != static_cast<std::size_t>(model.params.n_trees))
        throw Error("model: tree count does not match the header");
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        const auto& tree = model.trees[t];
        const std::string where = "model tree " + std::to_string(t);
        if (tree.empty())
            throw Error(where + ": empty tree");
        std::vector<char> seen(tree.size(), 0);
        std::vector<int> stack{0};
        std::size_t visited = 0;
        while (!stack.empty()) {
            const int id = stack.back();
            stack.pop_back();
            if (id < 0 || static_cast<std::size_t>(id) >= tree.size())
                throw Error(where + ": child id out of range");
            if (seen[static_cast<std::size_t>(id)])
                throw Error(where + ": node reached twice (cycle or shared child)");
            seen[static_cast<std::size_t>(id)] = 1;
            ++visited;
            const auto& node = tree[static_cast<std::size_t>(id)];
            if (node.is_leaf) {
                double sum = 0.0;
                for (double p : node.probs) {
                    if (!std::isfinite(p) || p < 0.0)
                        throw Error(where + ": leaf probability out of range");
                    sum += p;
                }
                if (std::abs(sum - 1.0) > 1e-12)
                    throw Error(where + ": leaf distribution does not sum to 1");
            } else {
                if (node.feature < 0 || node.feature >= kNumFeatures)
                    throw Error(where + ": bad feature index");
                if (!std::isfinite(node.threshold))
                    throw Error(where + ": non-finite threshold");
                stack.push_back(node.right);
                stack.push_back(node.left);
            }
        }
        if (visited != tree.size())
            throw Error(where + ": unreachable nodes");
    }
}

void save_model(const ForestModel& model, const std::filesystem::path& path) {
    validate(model);
    std::ostringstream os;
    os << "rfmodel v1 trees=" << model.params.n_trees << " mtry=" << model.params.mtry
       << " seed=" << model.params.seed << " rng=" << model.rng_id << "\n";
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        const auto& tree = model.trees[t];
        for (std::size_t n = 0; n < tree.size(); ++n) {
            const auto& node = tree[n];
            os << "t=" << t << " n=" << n;
            if (node.is_leaf) {
                os << " leaf=" << format_double(node.probs[0]) << ";"
                   << format_double(node.probs[1]) << ";" << format_double(node.probs[2]);
            } else {
                os << " f=" << node.feature << " thr=" << format_double(node.threshold)
                   << " l=" << node.left << " r=" << node.right;
            }
            os << "\n";
        }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot open " + path.string() + " for writing");
    f << os.str();
    if (!f.flush())
        throw Error("write failed: " + path.string());
}

namespace {

std::string_view expect_kv(std::string_view token, std::string_view key,
                           const std::string& where) {
    if (token.size() <= key.size() + 1 || token.substr(0, key.size()) != key ||
        token[key.size()] != '=')
        throw Error(where + ": expected " + std::string(key) + "=<value>, got '" +
                    std::string(token) + "'");
    return token.substr(key.size() + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && s[i] == ' ')
            ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ')
            ++j;
        if (j > i)
            out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

} // namespace

ForestModel load_model(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot open " + path.string());
    const std::string ctx = path.filename().string();
    std::string line;
    int lineno = 0;

    if (!std::getline(f, line))
        throw Error(ctx + ": empty model file");
    ++lineno;
    auto head = split_ws(trim(line));
    const std::string hwhere = ctx + ":1";
    if (head.size() != 6 || head[0] != "rfmodel")
        throw Error(hwhere + ": expected 'rfmodel v1 trees= mtry= seed= rng=' header");
    if (head[1] != "v1")
        throw Error(hwhere + ": unsupported model version '" + std::string(head[1]) + "'");

    ForestModel model;
    model.params.n_trees =
        static_cast<int>(parse_int(expect_kv(head[2], "trees", hwhere), hwhere));
    model.params.mtry = static_cast<int>(parse_int(expect_kv(head[3], "mtry", hwhere), hwhere));
    const std::string_view seed_sv = expect_kv(head[4], "seed", hwhere);
    {
        std::uint64_t seed = 0;
        auto res = std::from_chars(seed_sv.data(), seed_sv.data() + seed_sv.size(), seed);
        if (res.ec != std::errc{} || res.ptr != seed_sv.data() + seed_sv.size())
            throw Error(hwhere + ": bad seed");
        model.params.seed = seed;
    }
    model.rng_id = std::string(expect_kv(head[5], "rng", hwhere));
    if (model.params.n_trees < 1)
        throw Error(hwhere + ": trees must be >= 1");
    model.trees.resize(static_cast<std::size_t>(model.params.n_trees));

    while (std::getline(f, line)) {
        ++lineno;
        std::string_view sv = trim(line);
        if (sv.empty())
            continue;
        const std::string where = ctx + ":" + std::to_string(lineno);
        auto tok = split_ws(sv);
        if (tok.size() != 3 && tok.size() != 6)
            throw Error(where + ": expected a node line with 3 or 6 fields");
        const long long t = parse_int(expect_kv(tok[0], "t", where), where);
        const long long n = parse_int(expect_kv(tok[1], "n", where), where);
        if (t < 0 || t >= model.params.n_trees)
            throw Error(where + ": tree index out of range");
        auto& tree = model.trees[static_cast<std::size_t>(t)];
        if (n != static_cast<long long>(tree.size()))
            throw Error(where + ": node ids must be dense and in order within a tree");
        TreeNode node;
        if (tok.size() == 3) {
            auto parts = split(expect_kv(tok[2], "leaf", where), ';');
            if (parts.size() != kNumEyeClasses)
                throw Error(where + ": leaf needs 3 ';'-separated probabilities");
            node.is_leaf = true;
            for (int c = 0; c < kNumEyeClasses; ++c)
                node.probs[static_cast<std::size_t>(c)] =
                    parse_double(parts[static_cast<std::size_t>(c)], where);
        } else {
            node.is_leaf = false;
            node.feature = static_cast<int>(parse_int(expect_kv(tok[2], "f", where), where));
            node.threshold = parse_double(expect_kv(tok[3], "thr", where), where);
            node.left = static_cast<int>(parse_int(expect_kv(tok[4], "l", where), where));
            node.right = static_cast<int>(parse_int(expect_kv(tok[5], "r", where), where));
        }
        tree.push_back(node);
    }
    for (std::size_t t = 0; t < model.trees.size(); ++t)
        if (model.trees[t].empty())
            throw Error(ctx + ": tree " + std::to_string(t) + " missing (truncated file?)");
    validate(model);
    return model;
}

} // namespace onh
