#include "pivot.hpp"

#include <algorithm>

#include <json.hpp>

namespace pairprompt::pivot {

using nlohmann::json;

namespace {

void check_square(const pooling::ScoreMatrix& m) {
    if (m.rows() != m.cols() || m.query_ids != m.train_ids)
        fail(ErrorCode::InvalidArgument, "train relevance matrix must be square over the train set");
}

}  // namespace

bool PivotSet::contains(const std::string& id) const {
    for (const auto& [label, ids] : per_label)
        if (std::find(ids.begin(), ids.end(), id) != ids.end()) return true;
    return false;
}

std::string PivotSet::to_json() const {
    json doc;
    doc["p"] = p;
    doc["episode_seed"] = episode_seed;
    json labels = json::object();
    for (const auto& [label, ids] : per_label) labels[label] = ids;
    doc["pivots"] = std::move(labels);
    return doc.dump(2);
}

PivotSet PivotSet::from_json(const std::string& json_text) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        fail(ErrorCode::Parse, "pivot document is not a JSON object");
    PivotSet out;
    out.p = doc.at("p").get<int>();
    out.episode_seed = doc.at("episode_seed").get<std::uint64_t>();
    for (const auto& [label, ids] : doc.at("pivots").items())
        out.per_label.emplace_back(label, ids.get<std::vector<std::string>>());
    return out;
}

double representativeness(const pooling::ScoreMatrix& m, std::size_t column, bool exclude_self) {
    check_square(m);
    if (column >= m.cols()) fail(ErrorCode::InvalidArgument, "representativeness: column out of range");

    const std::string& label = m.train_labels[column];
    double same_sum = 0.0, other_sum = 0.0;
    std::size_t same_n = 0, other_n = 0;
    for (std::size_t j = 0; j < m.rows(); ++j) {
        if (m.train_labels[j] == label) {
            if (exclude_self && j == column) continue;
            same_sum += m.at(j, column);
            ++same_n;
        } else {
            other_sum += m.at(j, column);
            ++other_n;
        }
    }
    if (same_n == 0) {  // exclude_self on a singleton class falls back to the self score
        same_sum = m.at(column, column);
        same_n = 1;
    }
    if (other_n == 0)
        fail(ErrorCode::Precondition,
             "representativeness needs at least one sample of another label");
    return same_sum / static_cast<double>(same_n) - other_sum / static_cast<double>(other_n);
}

PivotSet select_pivots(const pooling::ScoreMatrix& m, int p, bool exclude_self,
                       std::uint64_t episode_seed) {
    check_square(m);
    if (p < 1) fail(ErrorCode::InvalidArgument, "pivot count p must be >= 1");

    std::vector<double> r(m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c) r[c] = representativeness(m, c, exclude_self);

    PivotSet out;
    out.p = p;
    out.episode_seed = episode_seed;
    for (std::size_t c = 0; c < m.cols(); ++c) {
        const std::string& label = m.train_labels[c];
        const bool seen = std::any_of(out.per_label.begin(), out.per_label.end(),
                                      [&](const auto& e) { return e.first == label; });
        if (seen) continue;
        std::vector<std::size_t> columns;
        for (std::size_t i = 0; i < m.cols(); ++i)
            if (m.train_labels[i] == label) columns.push_back(i);
        std::stable_sort(columns.begin(), columns.end(),
                         [&](std::size_t a, std::size_t b) { return r[a] > r[b]; });
        if (columns.size() > static_cast<std::size_t>(p)) columns.resize(static_cast<std::size_t>(p));
        std::vector<std::string> ids;
        for (const std::size_t i : columns) ids.push_back(m.train_ids[i]);
        out.per_label.emplace_back(label, std::move(ids));
    }
    return out;
}

namespace {

corpus::Episode restrict_to_pivots(const corpus::Episode& episode, const PivotSet& pivots) {
    corpus::Episode restricted = episode;
    restricted.train.clear();
    for (const corpus::Sample& s : episode.train)
        if (pivots.contains(s.id)) restricted.train.push_back(s);
    if (restricted.train.empty())
        fail(ErrorCode::Precondition, "pivot set selects no training samples of this episode");
    return restricted;
}

}  // namespace

pooling::ScoreMatrix pivot_score_matrix(const scoring::RelevanceScorer& scorer,
                                        const corpus::Episode& episode, const PivotSet& pivots) {
    return scoring::score_matrix(scorer, restrict_to_pivots(episode, pivots));
}

std::vector<pooling::Prediction> pivot_infer(const scoring::RelevanceScorer& scorer,
                                             const corpus::Episode& episode, const PivotSet& pivots,
                                             const pooling::PoolingMethod& method) {
    const pooling::ScoreMatrix matrix = pivot_score_matrix(scorer, episode, pivots);
    pooling::PoolingMethod effective = method;
    if (method.kind == pooling::PoolKind::Knn && method.k == 0)
        effective.k = pooling::default_k(matrix.cols());
    return pooling::classify_matrix(matrix, effective);
}

}  // namespace pairprompt::pivot
