#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vjump {

/// Ordered class names. Index 0 is the background (non-jump) class.
class ClassVocabulary {
public:
    struct Entry {
        std::string name;
        bool height_eligible = false;
    };

    explicit ClassVocabulary(std::vector<Entry> entries);

    /// NULL, CMJ, Smash, Block, OS, Squat, Dive, Hop; CMJ/Smash/Block/OS carry heights.
    static const ClassVocabulary& standard();

    std::size_t size() const noexcept { return entries_.size(); }
    const std::string& name(int class_id) const;
    std::optional<int> find(std::string_view name) const;
    /// Like find, but throws ValidationError listing the vocabulary.
    int index_of(std::string_view name) const;
    bool contains(int class_id) const noexcept {
        return class_id >= 0 && static_cast<std::size_t>(class_id) < entries_.size();
    }
    bool is_height_eligible(int class_id) const noexcept;
    /// Position of class_id among the height-eligible classes (CMJ = 0, ...). Throws when not eligible.
    int eligible_ordinal(int class_id) const;
    const std::vector<int>& eligible_classes() const noexcept { return eligible_; }
    std::vector<std::string> names() const;
    std::string describe() const;

private:
    std::vector<Entry> entries_;
    std::vector<int> eligible_;
};

}  // namespace vjump
