#include "gdvol/streaming/streaming.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "gdvol/errors.hpp"
#include "gdvol/mgsolver/kernels.hpp"
#include "gdvol/mgsolver/schedule.hpp"

namespace gdvol {

namespace {

std::size_t ring_slices(Transfer1D::Kind kind) {
  switch (kind) {
    case Transfer1D::Kind::identity: return 1;
    case Transfer1D::Kind::constant: return 2;
    case Transfer1D::Kind::linear: return 3;
  }
  return 3;
}

std::size_t upsampled_slices(Transfer1D::Kind kind) { return kind == Transfer1D::Kind::linear ? 2 : 1; }

WindowBudget level_budget(int k, Transfer1D::Kind z_kind, int prefetch_depth) {
  const std::size_t extra = static_cast<std::size_t>(prefetch_depth - 1);
  const std::size_t kk = static_cast<std::size_t>(k);
  WindowBudget w;
  w.constraint_slices = 1 + kk + 1 + ring_slices(z_kind) + extra;
  w.solution_slices = 2 + kk + 2 + upsampled_slices(z_kind) + extra;
  w.total = w.constraint_slices + w.solution_slices;
  return w;
}

}  // namespace

WindowBudget window_budget(int k, Scheme s, int prefetch_depth) {
  if (k < 1) throw ParameterError("window budget needs k >= 1");
  if (prefetch_depth < 1) throw ParameterError("prefetch depth must be >= 1");
  return level_budget(k, s == Scheme::constant ? Transfer1D::Kind::constant : Transfer1D::Kind::linear,
                      prefetch_depth);
}

void StreamConfig::validate() const {
  if (prefetch_depth < 1) throw ConfigError("prefetch depth must be >= 1");
  if (scratch == Precision::uint8) throw ConfigError("scratch precision must be binary16, binary32 or binary64");
}

// --- ScratchStore -------------------------------------------------------------

ScratchStore::ScratchStore(const std::filesystem::path& parent, bool keep) : keep_(keep) {
  static std::atomic<unsigned> counter{0};
  std::error_code ec;
  const std::filesystem::path base = parent.empty() ? std::filesystem::temp_directory_path(ec) : parent;
  if (ec) throw IoError("no temporary directory available: " + ec.message());
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const auto name = "gdvol-scratch-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
    dir_ = base / name;
    if (std::filesystem::create_directories(dir_, ec)) return;
    if (ec) throw IoError("cannot create scratch directory " + dir_.string() + ": " + ec.message());
  }
  throw IoError("cannot find a free scratch directory name under " + base.string());
}

ScratchStore::~ScratchStore() {
  files_.clear();
  if (complete_ && !keep_) {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
}

VolumeFile& ScratchStore::create(const std::string& name, GridDims dims, Precision p) {
  files_.push_back(std::make_unique<VolumeFile>(VolumeFile::create(dir_ / name, dims, p)));
  return *files_.back();
}

void ScratchStore::write_manifest() const {
  std::ofstream out(dir_ / "manifest.txt");
  if (!out) throw IoError("cannot write scratch manifest in " + dir_.string());
  for (const auto& f : files_) {
    out << f->path().filename().string() << ' ' << to_string(f->dims()) << ' ' << to_string(f->precision()) << '\n';
  }
  if (!out) throw IoError("failed writing scratch manifest in " + dir_.string());
}

namespace {

// --- slice pool and I/O worker ------------------------------------------------

template <typename T>
class SlicePool {
 public:
  void init(std::size_t capacity, std::size_t slice) {
    buffers_.assign(capacity, std::vector<T>(slice));
    free_.clear();
    for (std::size_t i = capacity; i-- > 0;) free_.push_back(static_cast<int>(i));
  }
  int acquire() {
    if (free_.empty()) throw std::logic_error("slice window exhausted");
    const int i = free_.back();
    free_.pop_back();
    peak_ = std::max(peak_, ++in_use_);
    return i;
  }
  void release(int i) {
    free_.push_back(i);
    --in_use_;
  }
  [[nodiscard]] T* data(int i) { return buffers_[static_cast<std::size_t>(i)].data(); }
  [[nodiscard]] std::size_t peak() const { return peak_; }
  [[nodiscard]] std::size_t in_use() const { return in_use_; }

 private:
  std::vector<std::vector<T>> buffers_;
  std::vector<int> free_;
  std::size_t in_use_ = 0, peak_ = 0;
};

/// Runs file reads and writes in submission order, on a background thread
/// when overlap is enabled and inline otherwise.
class IoWorker {
 public:
  explicit IoWorker(bool threaded) {
    if (threaded) thread_ = std::thread([this] { run(); });
  }
  ~IoWorker() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }
  IoWorker(const IoWorker&) = delete;
  IoWorker& operator=(const IoWorker&) = delete;

  std::shared_future<void> submit(std::function<void()> fn) {
    std::packaged_task<void()> task(std::move(fn));
    std::shared_future<void> done = task.get_future().share();
    if (!thread_.joinable()) {
      task();
      return done;
    }
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(task));
    }
    cv_.notify_one();
    return done;
  }

 private:
  void run() {
    while (true) {
      std::packaged_task<void()> task;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
        if (queue_.empty()) return;
        task = std::move(queue_.front());
        queue_.pop_front();
      }
      task();
    }
  }

  std::thread thread_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::packaged_task<void()>> queue_;
  bool stop_ = false;
};

struct Slot {
  int buf = -1;
  std::shared_future<void> io;  // pending read or write; invalid when none
};

void wait(Slot& s) {
  if (s.io.valid()) {
    auto io = std::move(s.io);
    s.io = {};
    io.get();
  }
}

template <typename T>
struct Level {
  GridDims dims{};
  std::size_t n = 0;
  StencilTable<T> table;
  Transfer3D to_coarse{};
  WindowBudget budget{};
  SlicePool<T> xpool, bpool;
  std::map<std::size_t, Slot> x, b;
  std::map<std::size_t, int> ring, up;
  std::vector<Slot> x_out, b_out;  // write-backs in flight, released at the next step
  VolumeFile* xfile = nullptr;
  VolumeFile* bfile = nullptr;
  std::size_t next = 0;           // next window step
  std::size_t next_restrict = 0;  // next coarse slice to receive a restricted residual
  std::vector<T> scratch;
};

}  // namespace

// --- engine -------------------------------------------------------------------

struct StreamSolver::Engine {
  virtual ~Engine() = default;
  virtual void prepare(const std::filesystem::path& input, bool warm_start) = 0;
  virtual double v_cycle(bool final_cycle) = 0;
  virtual void write_output(const std::filesystem::path& path, Precision p) = 0;
  virtual const StreamStats& stats() const = 0;
  virtual void complete() = 0;
  virtual double initial_ratio() const = 0;
};

namespace {

constexpr Precision working_precision(WorkPrecision p) {
  return p == WorkPrecision::binary64 ? Precision::binary64 : Precision::binary32;
}

template <typename T>
class TypedEngine final : public StreamSolver::Engine {
 public:
  TypedEngine(const SystemSpec& spec, GridDims dims, const SolverParams& params, const StreamConfig& config)
      : spec_(spec), params_(params), config_(config), dims_(dims), store_(config.temp_dir, config.keep_scratch),
        io_(config.overlap_io) {
    build();
  }

  ~TypedEngine() override {
    // in-flight tasks reference pool buffers; let them finish first
    for (auto& L : levels_) {
      for (auto* m : {&L->x, &L->b})
        for (auto& [z, s] : *m)
          if (s.io.valid()) s.io.wait();
      for (auto* v : {&L->x_out, &L->b_out})
        for (Slot& s : *v)
          if (s.io.valid()) s.io.wait();
    }
  }

  void prepare(const std::filesystem::path& input, bool warm_start) override;
  double v_cycle(bool final_cycle) override;
  void write_output(const std::filesystem::path& path, Precision p) override;
  const StreamStats& stats() const override { return stats_; }
  void complete() override { store_.complete(); }
  double initial_ratio() const override { return initial_ratio_; }

 private:
  void build();
  [[nodiscard]] std::size_t steps(const Level<T>& L) const {
    return L.dims.nz + static_cast<std::size_t>(params_.gs_iters) + 1;
  }

  Slot read(Level<T>& L, VolumeFile* file, SlicePool<T>& pool, std::size_t z) {
    const int buf = pool.acquire();
    T* p = pool.data(buf);
    const std::size_t n = L.n;
    return {buf, io_.submit([file, p, n, z] { file->read_slice<T>(z, std::span<T>(p, n)); })};
  }
  std::shared_future<void> write(VolumeFile* file, const T* p, std::size_t n, std::size_t z) {
    return io_.submit([file, p, n, z] { file->write_slice<T>(z, std::span<const T>(p, n)); });
  }
  T* xdata(Level<T>& L, std::size_t z) {
    auto it = L.x.find(z);
    if (it == L.x.end()) throw std::logic_error("solution slice not resident");
    wait(it->second);
    return L.xpool.data(it->second.buf);
  }
  T* bdata(Level<T>& L, std::size_t z) {
    auto it = L.b.find(z);
    if (it == L.b.end()) throw std::logic_error("constraint slice not resident");
    wait(it->second);
    return L.bpool.data(it->second.buf);
  }

  void retire(Level<T>& L);
  void release_all(Level<T>& L);
  void relax_window(Level<T>& L, std::size_t t);
  void advance(std::size_t l);
  void step_down(std::size_t l, std::size_t t);
  void step_up(std::size_t l, std::size_t t);
  void restrict_ready(std::size_t l, std::size_t zr);
  T* deliver(std::size_t coarse, std::size_t c);
  const T* coarse_solution(std::size_t coarse, std::size_t c);
  const T* upsampled(std::size_t l, std::size_t c);
  void write_back_x(Level<T>& L, std::size_t z, bool level0);
  void finish_down(std::size_t l);
  void finish_up(std::size_t l);
  void record(int pass, const std::array<std::size_t, 4>& before);
  [[nodiscard]] std::array<std::size_t, 4> counters() const;

  SystemSpec spec_;
  SolverParams params_;
  StreamConfig config_;
  GridDims dims_;
  ScratchStore store_;
  IoWorker io_;
  std::vector<std::unique_ptr<Level<T>>> levels_;  // streamed levels, finest first
  LevelState<T> coarsest_;
  CoarseSolver coarse_;
  VolumeFile* result_ = nullptr;
  StreamStats stats_;

  int cycle_ = 0;
  int pass_ = 0;
  bool final_ = false;
  bool prepared_ = false;
  bool solved_ = false;
  double rn_ = 0.0, bn_ = 0.0, dn_ = 0.0;
  double sum_ = 0.0;  // sum of the final solution, per plane in increasing z
  double mean_target_ = 0.0;
  double initial_ratio_ = 1.0;
};

template <typename T>
void TypedEngine<T>::build() {
  params_.validate();
  config_.validate();
  if (spec_.boundary == Boundary::periodic) throw ConfigError("the streaming engine supports Neumann boundaries only");
  if (spec_.value_target || spec_.gradient || spec_.constraints || spec_.initial_guess) {
    throw ParameterError("the streaming engine reads its inputs from files; in-memory volumes are not accepted");
  }
  // the value target arrives with prepare(), so validate against a placeholder-free copy
  SystemSpec check = spec_;
  check.rule.kind = GradientRule::Kind::zero;
  check.validate(dims_);
  if (spec_.rule.kind == GradientRule::Kind::npr && !(spec_.rule.sigma > 0.0)) {
    throw ParameterError("NPR sigma must be > 0");
  }

  const LevelOperator fine = fine_operator(params_.scheme, spec_.weights, spec_.alpha, dims_, spec_.boundary);
  std::vector<LevelPlan> plan = plan_levels(fine, params_.scheme, params_.coarsest_max_voxels);
  const Precision scratch = config_.scratch;
  const Precision work = working_precision(params_.precision);
  const Precision finest_b =
      bytes_per_value(scratch) > bytes_per_value(Precision::binary32) ? scratch : Precision::binary32;

  stats_.scratch_dir = store_.directory();
  for (std::size_t l = 0; l < plan.size(); ++l) {
    LevelPlan& lp = plan[l];
    LevelStreamStats st;
    st.dims = lp.op.dims();
    st.streamed = !lp.coarsest;
    if (lp.coarsest) {
      coarsest_.dims = st.dims;
      coarsest_.table = StencilTable<T>(lp.op);
      coarsest_.solution = Volume<T>(st.dims);
      coarsest_.constraints = Volume<T>(st.dims);
      coarsest_.op = std::move(lp.op);
      coarse_ = CoarseSolver(coarsest_.op);
    } else {
      auto L = std::make_unique<Level<T>>();
      L->dims = st.dims;
      L->n = st.dims.slice_size();
      L->table = StencilTable<T>(lp.op);
      L->to_coarse = lp.to_coarse;
      L->budget = level_budget(params_.gs_iters, lp.to_coarse[2].kind(), config_.prefetch_depth);
      if (config_.window_capacity != 0 && config_.window_capacity < L->budget.total) {
        throw ConfigError("window capacity of " + std::to_string(config_.window_capacity) +
                          " slices is below the " + std::to_string(L->budget.total) + " slices level " +
                          std::to_string(l) + " needs");
      }
      L->xpool.init(L->budget.solution_slices, L->n);
      L->bpool.init(L->budget.constraint_slices, L->n);
      const std::string prefix = "level" + std::to_string(l);
      L->xfile = &store_.create(prefix + "_solution.vxg", st.dims, scratch);
      L->bfile = &store_.create(prefix + "_constraints.vxg", st.dims, l == 0 ? finest_b : scratch);
      st.budget = L->budget;
      levels_.push_back(std::move(L));
    }
    stats_.levels.push_back(st);
  }
  if (!levels_.empty()) result_ = &store_.create("result.vxg", dims_, work);
  store_.write_manifest();
}

template <typename T>
std::array<std::size_t, 4> TypedEngine<T>::counters() const {
  if (levels_.empty()) return {0, 0, 0, 0};
  const Level<T>& L = *levels_.front();
  return {L.xfile->slices_read() + result_->slices_read(), L.xfile->slices_written() + result_->slices_written(),
          L.bfile->slices_read(), L.bfile->slices_written()};
}

template <typename T>
void TypedEngine<T>::record(int pass, const std::array<std::size_t, 4>& before) {
  const auto now = counters();
  stats_.finest.push_back({cycle_, pass, now[0] - before[0], now[1] - before[1], now[2] - before[2],
                           now[3] - before[3]});
}

template <typename T>
void TypedEngine<T>::prepare(const std::filesystem::path& input, bool warm_start) {
  VolumeFile in = VolumeFile::open(input);
  if (in.dims() != dims_) {
    throw DimensionMismatchError("input " + input.string() + " has dims " + to_string(in.dims()) + ", expected " +
                                 to_string(dims_));
  }
  const auto before = counters();
  const std::size_t n = dims_.slice_size();
  ConstraintAssembler assembler(params_.scheme, spec_, dims_, true);
  std::map<std::size_t, std::vector<float>> planes;
  std::size_t next_read = 0;
  double input_sum = 0.0;
  const PlaneFetch fetch = [&](std::size_t z) -> std::span<const float> {
    while (next_read <= z) {
      std::vector<float> p(n);
      in.read_slice<float>(next_read, p);
      input_sum += plane_sum(p.data(), n);
      planes[next_read++] = std::move(p);
    }
    return planes.at(z);
  };

  // the initial residual ratio is accumulated here, plane z once z+1 is loaded
  const StencilTable<T>& table = levels_.empty() ? coarsest_.table : levels_.front()->table;
  std::vector<double> bd(n);
  std::vector<T> bt(n), r(n);
  std::map<std::size_t, std::vector<T>> xs;
  auto x_plane = [&](std::size_t z) -> const std::vector<T>& {
    auto it = xs.find(z);
    if (it != xs.end()) return it->second;
    const auto& v = fetch(z);
    std::vector<T> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = warm_start ? static_cast<T>(v[i]) : T(0);
    return xs.emplace(z, std::move(x)).first->second;
  };
  double rn = 0.0, bn = 0.0, dn = 0.0;
  const auto& az = table.axis(2);
  for (std::size_t z = 0; z < dims_.nz; ++z) {
    (void)fetch(z);
    assembler.assemble(z, fetch, bd);
    for (std::size_t i = 0; i < n; ++i) bt[i] = static_cast<T>(bd[i]);
    const std::vector<T>& xt = x_plane(z);
    rn += residual_plane(table, z, x_plane(az.prev[z]).data(), xt.data(), x_plane(az.next[z]).data(), bt.data(),
                         r.data());
    bn += squared_norm(bt.data(), n);
    dn += diag_scaled_norm_plane(table, z, xt.data());
    if (levels_.empty()) {
      std::copy(bt.begin(), bt.end(), coarsest_.constraints.mutable_data() + z * n);
      std::copy(xt.begin(), xt.end(), coarsest_.solution.mutable_data() + z * n);
    } else {
      levels_.front()->bfile->template write_slice<T>(z, bt);
      levels_.front()->xfile->template write_slice<T>(z, xt);
    }
    while (!planes.empty() && planes.begin()->first < z) planes.erase(planes.begin());
    while (!xs.empty() && xs.begin()->first < z) xs.erase(xs.begin());
  }
  const double den = bn > 0.0 ? bn : dn;
  initial_ratio_ = den > 0.0 ? std::sqrt(rn / den) : std::sqrt(rn);
  mean_target_ = spec_.mean_target ? *spec_.mean_target : input_sum / static_cast<double>(dims_.voxel_count());
  record(0, before);
  prepared_ = true;
}

template <typename T>
void TypedEngine<T>::retire(Level<T>& L) {
  for (Slot& s : L.x_out) {
    wait(s);
    L.xpool.release(s.buf);
  }
  for (Slot& s : L.b_out) {
    wait(s);
    L.bpool.release(s.buf);
  }
  L.x_out.clear();
  L.b_out.clear();
}

template <typename T>
void TypedEngine<T>::release_all(Level<T>& L) {
  retire(L);
  for (auto& [z, s] : L.x) {
    wait(s);
    L.xpool.release(s.buf);
  }
  for (auto& [z, s] : L.b) {
    wait(s);
    L.bpool.release(s.buf);
  }
  for (auto& [z, buf] : L.up) L.xpool.release(buf);
  for (auto& [z, buf] : L.ring) L.bpool.release(buf);
  L.x.clear();
  L.b.clear();
  L.up.clear();
  L.ring.clear();
}

template <typename T>
void TypedEngine<T>::relax_window(Level<T>& L, std::size_t t) {
  const auto& az = L.table.axis(2);
  blocked_step(t, params_.relax_passes, params_.gs_iters, L.dims.nz, [&](std::size_t z) {
    const T* below = xdata(L, az.prev[z]);
    const T* above = xdata(L, az.next[z]);
    relax_plane(L.table, z, below, xdata(L, z), above, bdata(L, z), params_.order);
  });
}

template <typename T>
void TypedEngine<T>::advance(std::size_t l) {
  Level<T>& L = *levels_[l];
  const std::size_t t = L.next++;
  if (pass_ == 1) {
    step_down(l, t);
  } else {
    step_up(l, t);
  }
}

template <typename T>
T* TypedEngine<T>::deliver(std::size_t coarse, std::size_t c) {
  if (coarse == levels_.size()) return coarsest_.constraints.mutable_data() + c * coarsest_.dims.slice_size();
  Level<T>& C = *levels_[coarse];
  retire(C);
  const int buf = C.bpool.acquire();
  C.b[c] = Slot{buf, {}};
  return C.bpool.data(buf);
}

template <typename T>
void TypedEngine<T>::restrict_ready(std::size_t l, std::size_t zr) {
  Level<T>& L = *levels_[l];
  const Transfer3D& tr = L.to_coarse;
  const std::size_t nc = tr[2].coarse_size();
  std::vector<WeightedPlane<T>> terms;
  while (L.next_restrict < nc && tr[2].last_fine_of(L.next_restrict) <= zr) {
    const std::size_t c = L.next_restrict++;
    terms.clear();
    for (const auto& tap : tr[2].restrict_row(c)) terms.push_back({tap.weight, L.bpool.data(L.ring.at(tap.index))});
    T* out = deliver(l + 1, c);
    restrict_plane<T>(tr[0], tr[1], terms, out, L.scratch);
    for (auto it = L.ring.begin(); it != L.ring.end();) {
      if (tr[2].last_coarse_of(it->first) < L.next_restrict) {
        L.bpool.release(it->second);
        it = L.ring.erase(it);
      } else {
        ++it;
      }
    }
    if (l + 1 < levels_.size()) {
      Level<T>& C = *levels_[l + 1];
      if (C.next != c) throw std::logic_error("coarse window out of step");
      advance(l + 1);
    }
  }
}

template <typename T>
void TypedEngine<T>::write_back_x(Level<T>& L, std::size_t z, bool level0) {
  Slot s = L.x.at(z);
  L.x.erase(z);
  wait(s);
  const T* p = L.xpool.data(s.buf);
  VolumeFile* file = L.xfile;
  if (level0 && pass_ == 2 && final_) {
    sum_ += plane_sum(p, L.n);
    file = result_;
  }
  s.io = write(file, p, L.n, z);
  L.x_out.push_back(s);
}

// Downward pass: relax, then push restricted residuals to the coarser level as
// soon as each coarse slice is complete.
template <typename T>
void TypedEngine<T>::step_down(std::size_t l, std::size_t t) {
  Level<T>& L = *levels_[l];
  const std::size_t nz = L.dims.nz;
  const std::size_t k = static_cast<std::size_t>(params_.gs_iters);
  const std::size_t d = static_cast<std::size_t>(config_.prefetch_depth);
  retire(L);
  for (std::size_t z = t; z <= t + d && z < nz; ++z) {
    if (L.x.count(z)) continue;
    if (l == 0) {
      L.x[z] = read(L, L.xfile, L.xpool, z);
    } else {
      const int buf = L.xpool.acquire();
      std::fill(L.xpool.data(buf), L.xpool.data(buf) + L.n, T(0));
      L.x[z] = Slot{buf, {}};
    }
  }
  if (l == 0) {
    for (std::size_t z = t; z < t + d && z < nz; ++z) {
      if (!L.b.count(z)) L.b[z] = read(L, L.bfile, L.bpool, z);
    }
  }
  relax_window(L, t);

  if (t >= k + 1 && t - k - 1 < nz) {
    const std::size_t zr = t - k - 1;
    const auto& az = L.table.axis(2);
    const int rb = L.bpool.acquire();
    L.ring[zr] = rb;
    const T* below = xdata(L, az.prev[zr]);
    const T* above = xdata(L, az.next[zr]);
    (void)residual_plane(L.table, zr, below, xdata(L, zr), above, bdata(L, zr), L.bpool.data(rb));
    Slot bs = L.b.at(zr);
    L.b.erase(zr);
    if (l == 0) {
      L.bpool.release(bs.buf);
    } else {
      bs.io = write(L.bfile, L.bpool.data(bs.buf), L.n, zr);
      L.b_out.push_back(bs);
    }
    restrict_ready(l, zr);
  }
  if (t >= k + 2 && t - k - 2 < nz) write_back_x(L, t - k - 2, l == 0);
}

template <typename T>
const T* TypedEngine<T>::coarse_solution(std::size_t coarse, std::size_t c) {
  if (coarse == levels_.size()) return coarsest_.solution.data() + c * coarsest_.dims.slice_size();
  Level<T>& C = *levels_[coarse];
  const std::size_t ready = c + static_cast<std::size_t>(params_.gs_iters);
  while (C.next <= ready) advance(coarse);
  return xdata(C, c);
}

template <typename T>
const T* TypedEngine<T>::upsampled(std::size_t l, std::size_t c) {
  Level<T>& L = *levels_[l];
  if (auto it = L.up.find(c); it != L.up.end()) return L.xpool.data(it->second);
  const T* coarse = coarse_solution(l + 1, c);
  const int buf = L.xpool.acquire();
  L.up[c] = buf;
  prolong_plane<T>(L.to_coarse[0], L.to_coarse[1], coarse, L.xpool.data(buf), L.scratch);
  return L.xpool.data(buf);
}

// Upward pass: each slice takes its coarse correction just before it first
// enters the relaxation window; coarser levels are advanced on demand.
template <typename T>
void TypedEngine<T>::step_up(std::size_t l, std::size_t t) {
  Level<T>& L = *levels_[l];
  const std::size_t nz = L.dims.nz;
  const std::size_t k = static_cast<std::size_t>(params_.gs_iters);
  const std::size_t d = static_cast<std::size_t>(config_.prefetch_depth);
  retire(L);
  for (std::size_t z = t; z <= t + d && z < nz; ++z) {
    if (!L.x.count(z)) L.x[z] = read(L, L.xfile, L.xpool, z);
  }
  for (std::size_t z = t; z < t + d && z < nz; ++z) {
    if (!L.b.count(z)) L.b[z] = read(L, L.bfile, L.bpool, z);
  }
  if (t < nz) {
    const Transfer1D& tz = L.to_coarse[2];
    std::vector<WeightedPlane<T>> terms;
    for (const auto& tap : tz.prolong_row(t)) terms.push_back({tap.weight, upsampled(l, tap.index)});
    add_correction<T>(xdata(L, t), L.n, terms);
    for (auto it = L.up.begin(); it != L.up.end();) {
      if (tz.last_fine_of(it->first) <= t) {
        L.xpool.release(it->second);
        it = L.up.erase(it);
      } else {
        ++it;
      }
    }
  }
  relax_window(L, t);

  if (t >= k + 1 && t - k - 1 < nz) {
    const std::size_t zr = t - k - 1;
    if (l == 0) {
      const auto& az = L.table.axis(2);
      const int rb = L.bpool.acquire();
      const T* below = xdata(L, az.prev[zr]);
      const T* above = xdata(L, az.next[zr]);
      const T* x = xdata(L, zr);
      const T* b = bdata(L, zr);
      rn_ += residual_plane(L.table, zr, below, x, above, b, L.bpool.data(rb));
      bn_ += squared_norm(b, L.n);
      dn_ += diag_scaled_norm_plane(L.table, zr, x);
      L.bpool.release(rb);
    }
    Slot bs = L.b.at(zr);
    L.b.erase(zr);
    wait(bs);
    L.bpool.release(bs.buf);
  }
  if (t >= k + 2 && t - k - 2 < nz) {
    const std::size_t zw = t - k - 2;
    if (l == 0) {
      write_back_x(L, zw, true);
    } else {
      Slot s = L.x.at(zw);
      L.x.erase(zw);
      wait(s);
      L.xpool.release(s.buf);
    }
  }
}

template <typename T>
void TypedEngine<T>::finish_down(std::size_t l) {
  Level<T>& L = *levels_[l];
  while (L.next < steps(L)) advance(l);
  if (!L.ring.empty() || !L.up.empty()) throw std::logic_error("window not drained after the downward pass");
  while (!L.x.empty()) write_back_x(L, L.x.begin()->first, l == 0);
  release_all(L);
}

template <typename T>
void TypedEngine<T>::finish_up(std::size_t l) {
  Level<T>& L = *levels_[l];
  if (l == 0) {
    while (L.next < steps(L)) advance(l);
    while (!L.x.empty()) write_back_x(L, L.x.begin()->first, true);
  }
  release_all(L);
}

template <typename T>
double TypedEngine<T>::v_cycle(bool final_cycle) {
  if (!prepared_) throw std::logic_error("stream solver used before prepare()");
  ++cycle_;
  if (levels_.empty()) {
    coarse_.template solve<T>(coarsest_.constraints.values(), coarsest_.solution.mutable_values());
    solved_ = final_cycle;
    return residual_ratio(coarsest_);
  }

  pass_ = 1;
  for (auto& L : levels_) L->next = L->next_restrict = 0;
  auto before = counters();
  for (std::size_t l = 0; l < levels_.size(); ++l) finish_down(l);
  record(1, before);

  coarse_.template solve<T>(coarsest_.constraints.values(), coarsest_.solution.mutable_values());

  pass_ = 2;
  final_ = final_cycle;
  rn_ = bn_ = dn_ = 0.0;
  sum_ = 0.0;
  for (auto& L : levels_) L->next = 0;
  before = counters();
  for (std::size_t l = 0; l < levels_.size(); ++l) finish_up(l);
  record(2, before);

  for (std::size_t l = 0; l < levels_.size(); ++l) {
    stats_.levels[l].peak_solution_slices = levels_[l]->xpool.peak();
    stats_.levels[l].peak_constraint_slices = levels_[l]->bpool.peak();
  }
  solved_ = final_cycle;
  const double den = bn_ > 0.0 ? bn_ : dn_;
  return den > 0.0 ? std::sqrt(rn_ / den) : std::sqrt(rn_);
}

template <typename T>
void TypedEngine<T>::write_output(const std::filesystem::path& path, Precision p) {
  if (!solved_) throw std::logic_error("stream solver output requested before the final cycle");
  const std::size_t n = dims_.slice_size();
  const auto before = counters();
  if (levels_.empty()) {
    sum_ = 0.0;
    for (std::size_t z = 0; z < dims_.nz; ++z) sum_ += plane_sum(coarsest_.solution.data() + z * n, n);
  }
  const double shift = spec_.singular() ? mean_target_ - sum_ / static_cast<double>(dims_.voxel_count()) : 0.0;
  VolumeFile out = VolumeFile::create(path, dims_, p);
  std::vector<T> plane(n);
  for (std::size_t z = 0; z < dims_.nz; ++z) {
    if (levels_.empty()) {
      std::copy_n(coarsest_.solution.data() + z * n, n, plane.begin());
    } else {
      result_->read_slice<T>(z, plane);
    }
    if (spec_.singular()) {
      for (T& v : plane) v = static_cast<T>(v + shift);
    }
    out.write_slice<T>(z, plane);
  }
  out.flush();
  record(0, before);
}

}  // namespace

// --- StreamSolver ---------------------------------------------------------------

StreamSolver::StreamSolver(const SystemSpec& spec, GridDims dims, const SolverParams& params,
                           const StreamConfig& config) {
  params.validate();
  apply_thread_setting(params.threads);
  if (params.precision == WorkPrecision::binary64) {
    engine_ = std::make_unique<TypedEngine<double>>(spec, dims, params, config);
  } else {
    engine_ = std::make_unique<TypedEngine<float>>(spec, dims, params, config);
  }
}

StreamSolver::~StreamSolver() = default;

void StreamSolver::prepare(const std::filesystem::path& input, bool warm_start) { engine_->prepare(input, warm_start); }
double StreamSolver::v_cycle(bool final_cycle) { return engine_->v_cycle(final_cycle); }
void StreamSolver::write_output(const std::filesystem::path& path, Precision p) { engine_->write_output(path, p); }
const StreamStats& StreamSolver::stats() const { return engine_->stats(); }
void StreamSolver::complete() { engine_->complete(); }
double StreamSolver::initial_ratio() const { return engine_->initial_ratio(); }

StreamResult stream_solve(const StreamJob& job, const SystemSpec& spec, const SolverParams& params,
                          const StreamConfig& config) {
  const GridDims dims = read_header(job.input).dims;
  StreamSolver solver(spec, dims, params, config);
  solver.prepare(job.input, job.warm_start);
  StreamResult result;
  result.report.initial_ratio = solver.initial_ratio();
  result.report.engine = "streaming";
  result.report.initial_guess = job.warm_start ? "supplied" : "zero";
  for (int c = 0; c < params.v_cycles; ++c) {
    const auto start = std::chrono::steady_clock::now();
    result.report.ratios.push_back(solver.v_cycle(c + 1 == params.v_cycles));
    result.report.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  solver.write_output(job.output, job.output_precision);
  result.stats = solver.stats();
  solver.complete();
  return result;
}

// --- per-slice blend ----------------------------------------------------------

namespace {

template <typename T>
class SliceBlender {
 public:
  SliceBlender(GridDims slice, const BlendParams& p) : dims_(slice), params_(p) {
    if (!(p.alpha > 0.0)) throw ParameterError("blend needs alpha > 0");
    values_.alpha = p.alpha;
    values_.weights = {1.0, 1.0, 0.0};
    values_.boundary = p.boundary;
    gradients_ = values_;
    gradients_.alpha = 0.0;
    gradients_.rule.kind = GradientRule::Kind::masked;
    gradients_.rule.mask = {true, true, false};
    SolverParams sp;
    sp.scheme = p.scheme;
    sp.v_cycles = p.v_cycles;
    sp.relax_passes = p.relax_passes;
    sp.gs_iters = p.gs_iters;
    sp.coarsest_max_voxels = p.coarsest_max_voxels;
    sp.precision = p.precision;
    sp.threads = p.threads;
    h_ = build_hierarchy<T>(fine_operator(p.scheme, values_.weights, p.alpha, dims_, p.boundary), sp);
    b0_.resize(dims_.slice_size());
    b1_.resize(dims_.slice_size());
  }

  void blend(std::span<const float> i0, std::span<const float> i1, std::span<T> out) {
    ConstraintAssembler va(params_.scheme, values_, dims_, true);
    ConstraintAssembler ga(params_.scheme, gradients_, dims_, true);
    va.assemble(0, [&](std::size_t) { return i1; }, b1_);
    ga.assemble(0, [&](std::size_t) { return i0; }, b0_);
    LevelState<T>& top = h_.levels.front();
    auto b = top.constraints.mutable_values();
    auto x = top.solution.mutable_values();
    for (std::size_t i = 0; i < b.size(); ++i) {
      b[i] = static_cast<T>(b1_[i] + b0_[i]);
      x[i] = static_cast<T>(i1[i]);
    }
    for (int c = 0; c < params_.v_cycles; ++c) (void)gdvol::v_cycle(h_);
    std::copy(x.begin(), x.end(), out.begin());
  }

 private:
  GridDims dims_;
  BlendParams params_;
  SystemSpec values_, gradients_;
  Hierarchy<T> h_;
  std::vector<double> b0_, b1_;
};

template <typename T>
void blend_files(const std::filesystem::path& i0, const std::filesystem::path& i1, const std::filesystem::path& output,
                 Precision p, const BlendParams& params) {
  VolumeFile f0 = VolumeFile::open(i0);
  VolumeFile f1 = VolumeFile::open(i1);
  if (f0.dims() != f1.dims()) {
    throw DimensionMismatchError("blend inputs differ in size: " + to_string(f0.dims()) + " vs " +
                                 to_string(f1.dims()));
  }
  const GridDims d = f0.dims();
  VolumeFile out = VolumeFile::create(output, d, p);
  SliceBlender<T> blender({d.nx, d.ny, 1}, params);
  std::vector<float> a(d.slice_size()), b(d.slice_size());
  std::vector<T> x(d.slice_size());
  for (std::size_t z = 0; z < d.nz; ++z) {
    f0.read_slice<float>(z, a);
    f1.read_slice<float>(z, b);
    blender.blend(a, b, x);
    out.write_slice<T>(z, x);
  }
  out.flush();
}

template <typename T>
VoxelVolume blend_memory(const VoxelVolume& i0, const VoxelVolume& i1, const BlendParams& params) {
  if (i0.dims() != i1.dims()) {
    throw DimensionMismatchError("blend inputs differ in size: " + to_string(i0.dims()) + " vs " +
                                 to_string(i1.dims()));
  }
  const GridDims d = i0.dims();
  SliceBlender<T> blender({d.nx, d.ny, 1}, params);
  VoxelVolume out(d);
  std::vector<T> x(d.slice_size());
  for (std::size_t z = 0; z < d.nz; ++z) {
    blender.blend(i0.slice(z), i1.slice(z), x);
    auto dst = out.mutable_slice(z);
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = static_cast<float>(x[i]);
  }
  return out;
}

}  // namespace

void per_slice_stream_solve(const std::filesystem::path& i0, const std::filesystem::path& i1,
                            const std::filesystem::path& output, Precision output_precision,
                            const BlendParams& params) {
  apply_thread_setting(params.threads);
  if (params.precision == WorkPrecision::binary64) {
    blend_files<double>(i0, i1, output, output_precision, params);
  } else {
    blend_files<float>(i0, i1, output, output_precision, params);
  }
}

VoxelVolume blend_slices(const VoxelVolume& i0, const VoxelVolume& i1, const BlendParams& params) {
  apply_thread_setting(params.threads);
  if (params.precision == WorkPrecision::binary64) return blend_memory<double>(i0, i1, params);
  return blend_memory<float>(i0, i1, params);
}

}  // namespace gdvol
