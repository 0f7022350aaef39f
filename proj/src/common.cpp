#include "eopt/common.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace eopt {

namespace {

// Tape buffers are re-allocated every training step; keep big blocks on the
// heap instead of round-tripping them through mmap/munmap and page faults.
[[maybe_unused]] const bool malloc_tuned = [] {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
    return true;
}();

int resolve_worker_count() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("EOPT_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1 && cap < n) n = cap;
    }
    return n;
}

// Minimal persistent pool. Jobs are (begin, end) ranges; partitioning is
// static so results do not depend on scheduling.
class Pool {
public:
    Pool() : n_workers_(resolve_worker_count()) {
        for (int i = 1; i < n_workers_; ++i) {
            threads_.emplace_back([this, i] { worker_loop(i); });
        }
    }

    ~Pool() {
        {
            std::unique_lock<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    int size() const { return n_workers_; }

    void run(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
        if (n <= 0) return;
        if (inside_worker) {  // nested call: run inline
            body(0, n);
            return;
        }
        int parts = n_workers_;
        if (static_cast<int64_t>(parts) > n) parts = static_cast<int>(n);
        if (parts <= 1) {
            body(0, n);
            return;
        }
        {
            std::unique_lock<std::mutex> lk(mu_);
            job_ = &body;
            job_n_ = n;
            job_parts_ = parts;
            pending_ = parts - 1;
            ++epoch_;
        }
        cv_.notify_all();
        run_part(0);  // caller thread takes the first slice
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [this] { return pending_ == 0; });
        job_ = nullptr;
    }

private:
    void run_part(int part) {
        int64_t chunk = (job_n_ + job_parts_ - 1) / job_parts_;
        int64_t begin = chunk * part;
        int64_t end = begin + chunk;
        if (end > job_n_) end = job_n_;
        if (begin < end) (*job_)(begin, end);
    }

    static thread_local bool inside_worker;

    void worker_loop(int index) {
        inside_worker = true;
        uint64_t seen = 0;
        for (;;) {
            std::unique_lock<std::mutex> lk(mu_);
            cv_.wait(lk, [&] { return stop_ || epoch_ != seen; });
            if (stop_) return;
            seen = epoch_;
            int parts = job_parts_;
            lk.unlock();
            if (index < parts) run_part(index);
            lk.lock();
            if (index < parts && --pending_ == 0) {
                lk.unlock();
                done_cv_.notify_one();
            }
        }
    }

    int n_workers_;
    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(int64_t, int64_t)>* job_ = nullptr;
    int64_t job_n_ = 0;
    int job_parts_ = 0;
    int pending_ = 0;
    uint64_t epoch_ = 0;
    bool stop_ = false;
};

thread_local bool Pool::inside_worker = false;

Pool& pool() {
    static Pool p;
    return p;
}

}  // namespace

int worker_count() { return pool().size(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
    pool().run(n, body);
}

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open file for checksum: " + path);
    uint64_t h = 0xCBF29CE484222325ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        std::streamsize got = in.gcount();
        if (got > 0) h = fnv1a(buf, static_cast<size_t>(got), h);
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

}  // namespace eopt
