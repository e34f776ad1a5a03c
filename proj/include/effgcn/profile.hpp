#pragma once

// Opt-in wall-clock accounting per kernel, enabled by EFFGCN_PROFILE=1.
// Zero overhead beyond one branch when disabled.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <string>

namespace effgcn::prof {

struct Registry {
    std::map<std::string, double> seconds;
    std::map<std::string, std::uint64_t> calls;
    std::mutex mu;

    static Registry& instance() {
        static Registry r = [] {
            if (enabled()) std::atexit(&Registry::dump);
            return Registry{};
        }();
        return r;
    }

    static bool enabled() {
        static const bool on = [] {
            const char* env = std::getenv("EFFGCN_PROFILE");
            return env && env[0] == '1';
        }();
        return on;
    }

    void add(const char* name, double s) {
        std::lock_guard<std::mutex> lock(mu);
        seconds[name] += s;
        calls[name] += 1;
    }

    static void dump() {
        if (!enabled()) return;
        auto& r = instance();
        std::fprintf(stderr, "---- kernel time ----\n");
        for (const auto& [name, s] : r.seconds)
            std::fprintf(stderr, "%-24s %9.3f s  x%llu\n", name.c_str(), s,
                         static_cast<unsigned long long>(r.calls[name]));
    }
};

class Scope {
public:
    explicit Scope(const char* name) : name_(name) {
        if (Registry::enabled()) start_ = std::chrono::steady_clock::now();
    }
    ~Scope() {
        if (Registry::enabled())
            Registry::instance().add(
                name_, std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
                           .count());
    }

private:
    const char* name_;
    std::chrono::steady_clock::time_point start_;
};

}  // namespace effgcn::prof
