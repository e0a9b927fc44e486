#include "corpus.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pairprompt::corpus {

namespace {

using nlohmann::json;

void validate_dataset(const Dataset& dataset) {
    if (dataset.name.empty())
        fail(ErrorCode::InvalidArgument, "dataset name must be non-empty");
    if (dataset.samples.empty())
        fail(ErrorCode::Parse, "dataset '" + dataset.name + "' has no samples");
    if (dataset.label_set.size() < 2)
        fail(ErrorCode::Parse, "dataset '" + dataset.name + "' needs at least 2 labels, found " +
                                   std::to_string(dataset.label_set.size()));
    std::set<std::string> seen;
    for (const Sample& s : dataset.samples) {
        if (!seen.insert(s.id).second)
            fail(ErrorCode::Parse, "duplicate sample id '" + s.id + "' in dataset '" + dataset.name + "'");
        if (s.label.empty()) fail(ErrorCode::Parse, "sample '" + s.id + "' has an empty label");
    }
}

std::map<std::string, std::vector<std::size_t>> indices_by_label(const std::vector<Sample>& samples) {
    std::map<std::string, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < samples.size(); ++i) out[samples[i].label].push_back(i);
    return out;
}

// Per-label draw used by both episode sampling and OOD mixing: label_set
// order, `count` picks per label, one shared generator.
std::vector<Sample> draw_per_label(const Dataset& dataset, int count, Rng& rng,
                                   const std::set<std::string>* exclude_ids) {
    auto by_label = indices_by_label(dataset.samples);
    std::vector<Sample> out;
    out.reserve(dataset.label_set.size() * static_cast<std::size_t>(count));
    for (const std::string& label : dataset.label_set) {
        std::vector<std::size_t> pool = by_label[label];
        if (exclude_ids) {
            std::erase_if(pool, [&](std::size_t i) {
                return exclude_ids->count(dataset.samples[i].id) > 0;
            });
        }
        if (pool.size() < static_cast<std::size_t>(count))
            fail(ErrorCode::Precondition,
                 "insufficient samples for label '" + label + "' in dataset '" + dataset.name +
                     "': have " + std::to_string(pool.size()) + ", need " + std::to_string(count));
        for (std::size_t pick : rng.sample_indices(pool.size(), static_cast<std::size_t>(count)))
            out.push_back(dataset.samples[pool[pick]]);
    }
    return out;
}

}  // namespace

const Sample& Dataset::by_id(const std::string& id) const {
    for (const Sample& s : samples)
        if (s.id == id) return s;
    fail(ErrorCode::InvalidArgument, "unknown sample id '" + id + "' in dataset '" + name + "'");
}

bool Dataset::has_label(std::string_view label) const {
    return std::find(label_set.begin(), label_set.end(), label) != label_set.end();
}

Dataset load_dataset(const std::string& path, std::string name) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open dataset file '" + path + "'");
    if (name.empty()) name = std::filesystem::path(path).stem().string();

    Dataset dataset;
    dataset.name = name;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json record = json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object())
            fail(ErrorCode::Parse, "malformed record at line " + std::to_string(line_no) +
                                       " of '" + path + "': not a JSON object");
        for (const char* field : {"text", "label"}) {
            if (!record.contains(field) || !record[field].is_string())
                fail(ErrorCode::Parse, "malformed record at line " + std::to_string(line_no) +
                                           " of '" + path + "': missing string field \"" +
                                           field + "\"");
        }
        Sample sample;
        sample.text = record["text"].get<std::string>();
        sample.label = record["label"].get<std::string>();
        if (sample.label.empty())
            fail(ErrorCode::Parse, "malformed record at line " + std::to_string(line_no) +
                                       " of '" + path + "': empty label");
        if (record.contains("id")) {
            const json& id = record["id"];
            if (id.is_string())
                sample.id = id.get<std::string>();
            else if (id.is_number_integer())
                sample.id = std::to_string(id.get<std::int64_t>());
            else
                fail(ErrorCode::Parse, "malformed record at line " + std::to_string(line_no) +
                                           " of '" + path + "': \"id\" must be a string or integer");
        } else {
            sample.id = std::to_string(line_no - 1);
        }
        sample.dataset_tag = dataset.name;
        if (!dataset.has_label(sample.label)) dataset.label_set.push_back(sample.label);
        dataset.samples.push_back(std::move(sample));
    }
    if (dataset.samples.empty()) fail(ErrorCode::Parse, "dataset file '" + path + "' is empty");
    validate_dataset(dataset);
    return dataset;
}

Dataset make_dataset(std::string name, std::vector<Sample> samples) {
    Dataset dataset;
    dataset.name = std::move(name);
    dataset.samples = std::move(samples);
    for (Sample& s : dataset.samples) {
        if (s.dataset_tag.empty()) s.dataset_tag = dataset.name;
        if (!dataset.has_label(s.label)) dataset.label_set.push_back(s.label);
    }
    validate_dataset(dataset);
    return dataset;
}

Episode sample_episode(const Dataset& dataset, int shots, int query_size, std::uint64_t seed) {
    if (shots < 1) fail(ErrorCode::InvalidArgument, "shots must be >= 1");
    if (query_size < 0) fail(ErrorCode::InvalidArgument, "query_size must be >= 0");

    Rng rng(seed);
    Episode episode;
    episode.dataset_name = dataset.name;
    episode.label_set = dataset.label_set;
    episode.shots = shots;
    episode.query_size = query_size;
    episode.seed = seed;
    episode.train = draw_per_label(dataset, shots, rng, nullptr);

    std::set<std::string> train_ids;
    for (const Sample& s : episode.train) train_ids.insert(s.id);
    std::vector<std::size_t> remainder;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i)
        if (!train_ids.count(dataset.samples[i].id)) remainder.push_back(i);

    if (query_size == 0) {
        for (std::size_t i : remainder) episode.query.push_back(dataset.samples[i]);
    } else {
        if (remainder.size() < static_cast<std::size_t>(query_size))
            fail(ErrorCode::Precondition,
                 "insufficient samples for a query set of " + std::to_string(query_size) +
                     ": only " + std::to_string(remainder.size()) + " remain");
        for (std::size_t pick : rng.sample_indices(remainder.size(), static_cast<std::size_t>(query_size)))
            episode.query.push_back(dataset.samples[remainder[pick]]);
    }
    return episode;
}

Episode inject_label_noise(Episode episode, int m, std::uint64_t seed) {
    if (m < 0) fail(ErrorCode::InvalidArgument, "noise count must be >= 0");
    if (static_cast<std::size_t>(m) > episode.train.size())
        fail(ErrorCode::Precondition, "noise count " + std::to_string(m) +
                                          " exceeds train size " +
                                          std::to_string(episode.train.size()));
    if (m == 0) return episode;

    Rng rng(seed);
    const std::size_t n_labels = episode.label_set.size();
    for (std::size_t idx : rng.sample_indices(episode.train.size(), static_cast<std::size_t>(m))) {
        Sample& victim = episode.train[idx];
        // Uniform over the other n-1 labels.
        std::size_t current = 0;
        while (episode.label_set[current] != victim.label) ++current;
        std::size_t pick = static_cast<std::size_t>(rng.below(n_labels - 1));
        if (pick >= current) ++pick;
        victim.label = episode.label_set[pick];
        episode.noisy_ids.insert(victim.id);
        episode.corrupted_labels[victim.id] = victim.label;
    }
    return episode;
}

Episode mix_ood(Episode episode, const Dataset& ood_source, int ood_shots, std::uint64_t seed) {
    if (ood_source.name == episode.dataset_name)
        fail(ErrorCode::Precondition, "cannot mix a dataset with itself ('" + ood_source.name + "')");
    if (ood_shots < 0) fail(ErrorCode::InvalidArgument, "ood_shots must be >= 0");
    if (ood_shots == 0) return episode;

    Rng rng(seed);
    episode.ood_dataset_name = ood_source.name;
    episode.ood_train = draw_per_label(ood_source, ood_shots, rng, nullptr);
    return episode;
}

std::string episode_to_json(const Episode& episode) {
    json doc;
    doc["dataset"] = episode.dataset_name;
    doc["seed"] = episode.seed;
    doc["shots"] = episode.shots;
    doc["query_size"] = episode.query_size;
    json train_ids = json::array();
    for (const Sample& s : episode.train) train_ids.push_back(s.id);
    doc["train_ids"] = std::move(train_ids);
    json query_ids = json::array();
    for (const Sample& s : episode.query) query_ids.push_back(s.id);
    doc["query_ids"] = std::move(query_ids);
    doc["corrupted_labels"] = episode.corrupted_labels;
    doc["ood_dataset"] = episode.ood_dataset_name;
    json ood_ids = json::array();
    for (const Sample& s : episode.ood_train) ood_ids.push_back(s.id);
    doc["ood_ids"] = std::move(ood_ids);
    return doc.dump(2);
}

Episode episode_from_json(const std::string& json_text, const Dataset& dataset,
                          const Dataset* ood_source) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        fail(ErrorCode::Parse, "episode document is not a JSON object");

    Episode episode;
    episode.dataset_name = doc.at("dataset").get<std::string>();
    if (episode.dataset_name != dataset.name)
        fail(ErrorCode::InvalidArgument, "episode was sampled from '" + episode.dataset_name +
                                             "', not '" + dataset.name + "'");
    episode.label_set = dataset.label_set;
    episode.seed = doc.at("seed").get<std::uint64_t>();
    episode.shots = doc.at("shots").get<int>();
    episode.query_size = doc.at("query_size").get<int>();
    for (const auto& id : doc.at("train_ids")) episode.train.push_back(dataset.by_id(id.get<std::string>()));
    for (const auto& id : doc.at("query_ids")) episode.query.push_back(dataset.by_id(id.get<std::string>()));
    for (const auto& [id, label] : doc.at("corrupted_labels").items()) {
        if (!dataset.has_label(label.get<std::string>()))
            fail(ErrorCode::Parse, "corrupted label '" + label.get<std::string>() + "' not in label set");
        bool found = false;
        for (Sample& s : episode.train) {
            if (s.id == id) {
                s.label = label.get<std::string>();
                found = true;
                break;
            }
        }
        if (!found) fail(ErrorCode::Parse, "corrupted id '" + id + "' is not a train sample");
        episode.noisy_ids.insert(id);
        episode.corrupted_labels[id] = label.get<std::string>();
    }
    const std::string ood_name = doc.at("ood_dataset").get<std::string>();
    if (!ood_name.empty()) {
        if (!ood_source || ood_source->name != ood_name)
            fail(ErrorCode::InvalidArgument, "episode needs OOD dataset '" + ood_name + "'");
        episode.ood_dataset_name = ood_name;
        for (const auto& id : doc.at("ood_ids"))
            episode.ood_train.push_back(ood_source->by_id(id.get<std::string>()));
    }
    return episode;
}

std::vector<std::string> Tokenizer::normalize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char raw : text) {
        const unsigned char c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            if (!current.empty()) tokens.push_back(std::move(current)), current.clear();
        } else if (!std::ispunct(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::int32_t Tokenizer::intern(const std::string& token) {
    const auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const auto id = static_cast<std::int32_t>(vocab_.size());
    vocab_.push_back(token);
    index_.emplace(token, id);
    return id;
}

Tokenizer Tokenizer::build(std::span<const Dataset* const> datasets, std::string_view extra_text) {
    Tokenizer t;
    t.intern("[PAD]");
    t.intern("[UNK]");
    t.intern("[MASK]");
    t.intern("[SEP]");
    for (const auto word : kPositiveMetaWords) t.intern(std::string(word));
    for (const auto word : kNegativeMetaWords) t.intern(std::string(word));
    for (const std::string& token : normalize(extra_text)) t.intern(token);
    for (const Dataset* dataset : datasets)
        for (const Sample& sample : dataset->samples)
            for (const std::string& token : normalize(sample.text)) t.intern(token);
    return t;
}

Tokenizer Tokenizer::from_vocab(std::vector<std::string> vocab) {
    Tokenizer t;
    for (const std::string& token : vocab) t.intern(token);
    if (t.vocab_.size() != vocab.size())
        fail(ErrorCode::Parse, "checkpoint vocabulary contains duplicates");
    if (t.vocab_.size() < 10 || t.vocab_[0] != "[PAD]" || t.vocab_[1] != "[UNK]" ||
        t.vocab_[2] != "[MASK]" || t.vocab_[3] != "[SEP]")
        fail(ErrorCode::Parse, "checkpoint vocabulary lacks the special-token prefix");
    return t;
}

std::vector<std::int32_t> Tokenizer::encode(std::string_view text, std::size_t max_tokens) const {
    if (max_tokens < 1) fail(ErrorCode::Precondition, "max_tokens must be >= 1");
    std::vector<std::int32_t> out;
    for (const std::string& token : normalize(text)) {
        if (out.size() >= max_tokens) break;
        const auto it = index_.find(token);
        out.push_back(it == index_.end() ? kUnk : it->second);
    }
    return out;
}

std::optional<std::int32_t> Tokenizer::lookup(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? std::nullopt : std::optional<std::int32_t>(it->second);
}

}  // namespace pairprompt::corpus
