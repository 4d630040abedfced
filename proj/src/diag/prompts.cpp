#include "iodiag/diag.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace iodiag::diag {

namespace detail {
const std::map<std::string, std::string>& builtin_prompts();
}

PromptSet PromptSet::builtin() {
    PromptSet p;
    p.templates_ = detail::builtin_prompts();
    return p;
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
    auto p = builtin();
    if (!std::filesystem::is_directory(dir))
        throw std::runtime_error("prompt directory not found: " + dir.string());
    for (const auto& [name, text] : detail::builtin_prompts()) {
        const auto file = dir / (name + ".txt");
        if (!std::filesystem::exists(file)) continue;
        std::ifstream in(file, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        p.templates_[name] = ss.str();
    }
    return p;
}

const std::string& PromptSet::get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw std::out_of_range("no prompt template named '" + name + "'");
    return it->second;
}

std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (true) {
        const auto open = tmpl.find("{{", pos);
        if (open == std::string::npos) break;
        const auto close = tmpl.find("}}", open + 2);
        if (close == std::string::npos) break;
        const std::string name = tmpl.substr(open + 2, close - open - 2);
        auto it = slots.find(name);
        if (it == slots.end()) throw std::invalid_argument("prompt slot '" + name + "' has no value");
        out.append(tmpl, pos, open - pos);
        out += it->second;
        pos = close + 2;
    }
    out.append(tmpl, pos, std::string::npos);
    return out;
}

void WarningLog::add(std::string message) {
    std::lock_guard lock(mutex_);
    items_.push_back(std::move(message));
}

std::vector<std::string> WarningLog::items() const {
    std::lock_guard lock(mutex_);
    return items_;
}

}  // namespace iodiag::diag
