#include "fcst/prompt.hpp"

#include "fcst/error.hpp"
#include "fcst/util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace fcst::prompt {

std::string_view to_string(PromptMode mode) noexcept {
    return mode == PromptMode::zero_shot ? "zero_shot" : "few_shot";
}

std::optional<PromptMode> parse_prompt_mode(std::string_view name) noexcept {
    if (name == "zero_shot") return PromptMode::zero_shot;
    if (name == "few_shot") return PromptMode::few_shot;
    return std::nullopt;
}

std::string serialize_values(std::span<const double> values) {
    std::string out = "[";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            fail(ErrorCode::NonFiniteValue, "cannot serialize non-finite value at position " + std::to_string(i));
        }
        if (i > 0) out += ", ";
        out += format_double(values[i]);
    }
    out += ']';
    return out;
}

namespace {

std::string task_lines(std::span<const double> window, std::size_t horizon) {
    return "Input: " + serialize_values(window) + "\n" + "Task: Predict the next " + std::to_string(horizon) +
           " value(s) of the series (same normalized scale).\n";
}

}  // namespace

std::string render_zero_shot(std::span<const double> window, std::size_t horizon) {
    return "You are given a time series window (normalized, mean 0, std 1).\n" + task_lines(window, horizon) +
           "Output Format: JSON object exactly as: {\"pred\": [v1, v2, ...]}.Return numbers only\n";
}

std::string render_few_shot(std::span<const Shot> shots, std::span<const double> window, std::size_t horizon) {
    if (shots.empty()) fail(ErrorCode::NoShots, "few-shot prompt needs at least one example");
    std::string out = "You are given example windows and their next value(s) (normalized).\n";
    for (const auto& shot : shots) {
        out += "Window: " + serialize_values(shot.window) + "\n";
        out += "Next: " + serialize_values(shot.next) + "\n";
    }
    out += task_lines(window, horizon);
    out += "Output JSON exactly: {\"pred\": [v1, v2, ...]}.Return numbers only\n";
    return out;
}

std::vector<Shot> select_shots(std::span<const data::WindowSample> train, std::size_t k) {
    if (train.size() < k) {
        fail(ErrorCode::NotEnoughSamples, "need " + std::to_string(k) + " shots but the train split has " +
                                              std::to_string(train.size()) + " samples");
    }
    std::vector<Shot> shots;
    for (std::size_t i = train.size() - k; i < train.size(); ++i) {
        shots.push_back(Shot{train[i].input, train[i].target, train[i].origin_index});
    }
    return shots;
}

std::size_t estimate_tokens(std::string_view text) noexcept { return (text.size() + 3) / 4; }

// ---- reply parsing ----------------------------------------------------------

namespace {

struct SyntaxError {};

struct PredResult {
    ErrorCode error{};
    bool ok = false;
    std::string message;
    std::vector<double> values;
};

bool is_non_finite_word(std::string_view tok) {
    std::string t;
    for (char c : tok) t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (!t.empty() && (t[0] == '-' || t[0] == '+')) t.erase(0, 1);
    return t == "nan" || t == "inf" || t == "infinity";
}

class ObjectParser {
public:
    explicit ObjectParser(std::string_view text) : s_(text) {}

    /// Parses one complete JSON object spanning the whole text. Returns the
    /// result for the first top-level "pred" key, if any.
    std::optional<PredResult> parse() {
        std::optional<PredResult> pred;
        parse_object(&pred);
        ws();
        if (pos_ != s_.size()) throw SyntaxError{};
        return pred;
    }

private:
    void ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' || s_[pos_] == '\r')) ++pos_;
    }
    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
    void expect(char c) {
        ws();
        if (peek() != c) throw SyntaxError{};
        ++pos_;
    }

    std::string parse_string() {
        expect('"');
        std::string out;
        while (true) {
            if (pos_ >= s_.size()) throw SyntaxError{};
            const char c = s_[pos_++];
            if (c == '"') return out;
            if (static_cast<unsigned char>(c) < 0x20) throw SyntaxError{};
            if (c != '\\') {
                out += c;
                continue;
            }
            if (pos_ >= s_.size()) throw SyntaxError{};
            const char e = s_[pos_++];
            switch (e) {
                case '"': case '\\': case '/': out += e; break;
                case 'b': out += '\b'; break;
                case 'f': out += '\f'; break;
                case 'n': out += '\n'; break;
                case 'r': out += '\r'; break;
                case 't': out += '\t'; break;
                case 'u':
                    if (pos_ + 4 > s_.size()) throw SyntaxError{};
                    for (int i = 0; i < 4; ++i) {
                        if (!std::isxdigit(static_cast<unsigned char>(s_[pos_ + i]))) throw SyntaxError{};
                    }
                    out += "\\u" + std::string(s_.substr(pos_, 4));  // only compared against "pred"
                    pos_ += 4;
                    break;
                default: throw SyntaxError{};
            }
        }
    }

    std::string_view scalar_token() {
        const std::size_t start = pos_;
        while (pos_ < s_.size()) {
            const char c = s_[pos_];
            if (c == ',' || c == ']' || c == '}' || c == ' ' || c == '\t' || c == '\n' || c == '\r') break;
            ++pos_;
        }
        return s_.substr(start, pos_ - start);
    }

    static bool valid_json_number(std::string_view t) {
        std::size_t i = 0;
        if (i < t.size() && t[i] == '-') ++i;
        if (i >= t.size()) return false;
        if (t[i] == '0') {
            ++i;
        } else if (t[i] >= '1' && t[i] <= '9') {
            while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
        } else {
            return false;
        }
        if (i < t.size() && t[i] == '.') {
            ++i;
            if (i >= t.size() || !std::isdigit(static_cast<unsigned char>(t[i]))) return false;
            while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
        }
        if (i < t.size() && (t[i] == 'e' || t[i] == 'E')) {
            ++i;
            if (i < t.size() && (t[i] == '+' || t[i] == '-')) ++i;
            if (i >= t.size() || !std::isdigit(static_cast<unsigned char>(t[i]))) return false;
            while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
        }
        return i == t.size();
    }

    void skip_value() {
        ws();
        const char c = peek();
        if (c == '{') {
            parse_object(nullptr);
        } else if (c == '[') {
            ++pos_;
            ws();
            if (peek() == ']') {
                ++pos_;
                return;
            }
            while (true) {
                skip_value();
                ws();
                if (peek() == ',') {
                    ++pos_;
                    continue;
                }
                expect(']');
                return;
            }
        } else if (c == '"') {
            parse_string();
        } else {
            const auto tok = scalar_token();
            if (tok != "true" && tok != "false" && tok != "null" && !valid_json_number(tok)) throw SyntaxError{};
        }
    }

    // Element-level problems become typed errors; structural problems after
    // the array is known to be well delimited are reported the same way.
    PredResult parse_pred_array() {
        PredResult r;
        ws();
        if (peek() != '[') {
            skip_value();
            r.error = ErrorCode::MalformedNumber;
            r.message = "\"pred\" is not an array";
            return r;
        }
        ++pos_;
        ws();
        if (peek() == ']') {
            ++pos_;
            r.ok = true;
            return r;
        }
        std::optional<PredResult> first_error;
        while (true) {
            ws();
            const char c = peek();
            if (c == '{' || c == '[' || c == '"') {
                skip_value();
                if (!first_error) {
                    first_error = PredResult{ErrorCode::MalformedNumber, false,
                                             "element " + std::to_string(r.values.size()) + " is not a number", {}};
                }
                r.values.push_back(0.0);
            } else {
                const auto tok = scalar_token();
                if (tok.empty()) throw SyntaxError{};
                const double v = classify_number(tok, r.values.size(), first_error);
                r.values.push_back(v);
            }
            ws();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            expect(']');
            break;
        }
        if (first_error) return *first_error;
        r.ok = true;
        return r;
    }

    static double classify_number(std::string_view tok, std::size_t index, std::optional<PredResult>& first_error) {
        const auto set = [&](ErrorCode code, std::string msg) {
            if (!first_error) first_error = PredResult{code, false, std::move(msg), {}};
        };
        if (is_non_finite_word(tok)) {
            set(ErrorCode::NonFiniteValue, "element " + std::to_string(index) + " is " + std::string(tok));
            return 0.0;
        }
        if (!valid_json_number(tok)) {
            set(ErrorCode::MalformedNumber, "element " + std::to_string(index) + " is not a number: " + std::string(tok));
            return 0.0;
        }
        const auto v = parse_double(tok);
        if (!v) {
            set(ErrorCode::MalformedNumber, "element " + std::to_string(index) + " is not a number: " + std::string(tok));
            return 0.0;
        }
        if (!std::isfinite(*v)) {
            set(ErrorCode::NonFiniteValue, "element " + std::to_string(index) + " overflows: " + std::string(tok));
            return 0.0;
        }
        return *v;
    }

    void parse_object(std::optional<PredResult>* pred) {
        expect('{');
        ws();
        if (peek() == '}') {
            ++pos_;
            return;
        }
        while (true) {
            ws();
            const std::string key = parse_string();
            expect(':');
            if (pred && key == "pred" && !*pred) {
                *pred = parse_pred_array();
            } else {
                skip_value();
            }
            ws();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            expect('}');
            return;
        }
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

/// Index one past the '}' matching the '{' at `open`, honouring strings, or
/// npos when the braces never balance.
std::size_t matching_brace(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

/// Drops markdown fence lines ("```" or "```json") so their contents read
/// as plain text.
std::string strip_fences(std::string_view text) {
    std::string out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = trim(text.substr(pos, nl - pos));
        if (!line.starts_with("```")) {
            out.append(text.substr(pos, nl - pos));
            out += '\n';
        }
        pos = nl + 1;
    }
    return out;
}

}  // namespace

std::vector<double> parse_prediction(std::string_view raw, std::size_t horizon) {
    const std::string text = strip_fences(trim(raw));
    const std::string_view view(text);
    for (std::size_t open = view.find('{'); open != std::string_view::npos; open = view.find('{', open + 1)) {
        const std::size_t close = matching_brace(view, open);
        if (close == std::string_view::npos) continue;
        std::optional<PredResult> pred;
        try {
            pred = ObjectParser(view.substr(open, close - open)).parse();
        } catch (const SyntaxError&) {
            continue;
        }
        if (!pred) continue;
        if (!pred->ok) fail(pred->error, pred->message);
        if (pred->values.size() != horizon) {
            fail(ErrorCode::WrongCount, "expected " + std::to_string(horizon) + " value(s), got " +
                                            std::to_string(pred->values.size()));
        }
        return pred->values;
    }
    fail(ErrorCode::NoJsonFound, "no JSON object with a \"pred\" key in the response");
}

}  // namespace fcst::prompt
