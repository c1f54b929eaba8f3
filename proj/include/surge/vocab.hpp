#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace surge {

using TokenId = std::uint32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kBos = 2;
inline constexpr TokenId kEos = 3;

/// Splits text into word units: whitespace and '_' separate words, and
/// leading/trailing punctuation plus a leading '~' become their own units.
std::vector<std::string> split_words(std::string_view text);

/// Token strings <-> ids. Ids 0-3 are PAD, UNK, BOS, EOS.
class Vocabulary {
public:
    Vocabulary();

    /// One token per line, line number = id. The first four lines must be
    /// the reserved tokens.
    static Vocabulary load(std::istream& in);
    static Vocabulary load_file(const std::filesystem::path& path);
    void save(std::ostream& out) const;

    /// Adds `token` if absent; returns its id.
    TokenId add(const std::string& token);

    [[nodiscard]] TokenId id(std::string_view token) const;  // kUnk when absent
    [[nodiscard]] bool contains(std::string_view token) const;
    [[nodiscard]] const std::string& token(TokenId id) const;
    [[nodiscard]] std::size_t size() const { return tokens_.size(); }

    [[nodiscard]] std::vector<TokenId> encode(std::string_view text) const;
    /// Joins non-reserved tokens with single spaces.
    [[nodiscard]] std::string decode(std::span<const TokenId> ids) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace surge
