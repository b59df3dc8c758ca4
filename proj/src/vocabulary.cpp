#include "vjump/vocabulary.hpp"

#include <algorithm>
#include <set>

#include "vjump/error.hpp"

namespace vjump {

ClassVocabulary::ClassVocabulary(std::vector<Entry> entries) : entries_(std::move(entries)) {
    if (entries_.empty()) throw ValidationError("vocabulary must contain a background class");
    if (entries_.front().height_eligible) throw ValidationError("background class cannot be height-eligible");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name.empty()) throw ValidationError("empty class name");
        if (!seen.insert(entries_[i].name).second) {
            throw ValidationError("duplicate class name '" + entries_[i].name + "'");
        }
        if (entries_[i].height_eligible) eligible_.push_back(static_cast<int>(i));
    }
}

const ClassVocabulary& ClassVocabulary::standard() {
    static const ClassVocabulary vocab({{"NULL", false},
                                        {"CMJ", true},
                                        {"Smash", true},
                                        {"Block", true},
                                        {"OS", true},
                                        {"Squat", false},
                                        {"Dive", false},
                                        {"Hop", false}});
    return vocab;
}

const std::string& ClassVocabulary::name(int class_id) const {
    if (!contains(class_id)) throw ValidationError("class id " + std::to_string(class_id) + " not in vocabulary");
    return entries_[static_cast<std::size_t>(class_id)].name;
}

std::optional<int> ClassVocabulary::find(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name == name) return static_cast<int>(i);
    }
    return std::nullopt;
}

int ClassVocabulary::index_of(std::string_view name) const {
    if (auto id = find(name)) return *id;
    throw ValidationError("unknown class '" + std::string(name) + "'; vocabulary is " + describe());
}

bool ClassVocabulary::is_height_eligible(int class_id) const noexcept {
    return contains(class_id) && entries_[static_cast<std::size_t>(class_id)].height_eligible;
}

int ClassVocabulary::eligible_ordinal(int class_id) const {
    const auto it = std::find(eligible_.begin(), eligible_.end(), class_id);
    if (it == eligible_.end()) {
        throw ValidationError("class " + std::to_string(class_id) + " is not height-eligible");
    }
    return static_cast<int>(it - eligible_.begin());
}

std::vector<std::string> ClassVocabulary::names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
}

std::string ClassVocabulary::describe() const {
    std::string s = "[";
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (i) s += ", ";
        s += entries_[i].name;
    }
    return s + "]";
}

}  // namespace vjump
