#include "surge/vocab.hpp"

#include "surge/error.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace surge {

namespace {

const char* const kReserved[] = {"<pad>", "<unk>", "<bos>", "<eos>"};

bool is_separator(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '_'; }

bool is_punct(char c) {
    switch (c) {
        case '.':
        case ',':
        case '?':
        case '!':
        case ';':
        case ':':
        case '"':
        case '(':
        case ')':
            return true;
        default:
            return false;
    }
}

void push_word(std::string_view word, std::vector<std::string>& out) {
    std::size_t b = 0;
    std::size_t e = word.size();
    std::vector<std::string> trailing;
    while (b < e && (is_punct(word[b]) || word[b] == '~')) {
        out.emplace_back(1, word[b]);
        ++b;
    }
    while (e > b && is_punct(word[e - 1])) {
        trailing.emplace_back(1, word[e - 1]);
        --e;
    }
    if (e > b) {
        out.emplace_back(word.substr(b, e - b));
    }
    out.insert(out.end(), trailing.rbegin(), trailing.rend());
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_separator(text[i])) {
            ++i;
        }
        std::size_t j = i;
        while (j < text.size() && !is_separator(text[j])) {
            ++j;
        }
        if (j > i) {
            push_word(text.substr(i, j - i), out);
        }
        i = j;
    }
    return out;
}

Vocabulary::Vocabulary() {
    for (const char* r : kReserved) {
        add(r);
    }
}

Vocabulary Vocabulary::load(std::istream& in) {
    Vocabulary v;
    v.tokens_.clear();
    v.ids_.clear();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line_no <= 4 && line != kReserved[line_no - 1]) {
            throw ParseError("expected reserved token " + std::string(kReserved[line_no - 1]), line_no);
        }
        if (line.empty()) {
            throw ParseError("empty token", line_no);
        }
        if (v.ids_.contains(line)) {
            throw ParseError("duplicate token " + line, line_no);
        }
        v.ids_.emplace(line, static_cast<TokenId>(v.tokens_.size()));
        v.tokens_.push_back(line);
    }
    if (v.tokens_.size() < 4) {
        throw Error("vocabulary is missing reserved tokens");
    }
    return v;
}

Vocabulary Vocabulary::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open vocabulary " + path.string());
    }
    return load(in);
}

void Vocabulary::save(std::ostream& out) const {
    for (const auto& t : tokens_) {
        out << t << '\n';
    }
}

TokenId Vocabulary::add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) {
        return it->second;
    }
    const auto id = static_cast<TokenId>(tokens_.size());
    ids_.emplace(token, id);
    tokens_.push_back(token);
    return id;
}

TokenId Vocabulary::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

const std::string& Vocabulary::token(TokenId id) const {
    if (id >= tokens_.size()) {
        throw Error("token id out of range: " + std::to_string(id));
    }
    return tokens_[id];
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
    std::vector<TokenId> out;
    for (const auto& w : split_words(text)) {
        out.push_back(id(w));
    }
    return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId t : ids) {
        if (t <= kEos) {
            continue;
        }
        if (!out.empty()) {
            out += ' ';
        }
        out += token(t);
    }
    return out;
}

}  // namespace surge
