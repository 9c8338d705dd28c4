#include <cmath>
#include <functional>
#include <iomanip>

#include "hedge/commands.hpp"
#include "hedge/embeddings.hpp"
#include "hedge/layers.hpp"

// cmd_gradcheck: central-difference verification of every layer's backward
// rule on small seeded instances.

namespace hedge::cli {

namespace {

using ad::Tensor;

std::vector<double> draws(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// values bounded away from zero, for kinked ops (relu, max pooling)
std::vector<double> draws_off_zero(Rng& rng, std::size_t n, double margin = 0.1) {
  std::vector<double> v(n);
  for (auto& x : v) {
    const double u = rng.uniform(margin, 1.0);
    x = rng.uniform() < 0.5 ? -u : u;
  }
  return v;
}

Tensor rand_t(Rng& rng, std::vector<std::size_t> shape, bool off_zero = false) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return Tensor::from_data(std::move(shape),
                           off_zero ? draws_off_zero(rng, n) : draws(rng, n));
}

// sigmoid forward with a deliberately broken backward rule; only reachable
// through --inject-error, to prove the harness catches bad derivatives
Tensor broken_sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    out.value()[i] = 1.0 / (1.0 + std::exp(-x.value()[i]));
  if (ad::Tape::grad_enabled() && x.requires_grad()) {
    out.enable_grad();
    auto xi = x.impl();
    auto oi = out.impl();
    ad::Tape::active().record(oi, [xi, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        const double s = oi->value[i];
        xi->grad[i] += oi->grad[i] * s * (1.0 - 0.9 * s);  // wrong on purpose
      }
    });
  }
  return out;
}

struct Check {
  std::string name;
  std::function<double(Rng&, double)> run;  // -> max relative error
};

std::vector<Check> build_checks() {
  using F = std::function<Tensor(const Tensor&)>;
  std::vector<Check> checks;
  auto add = [&](std::string name, std::function<double(Rng&, double)> fn) {
    checks.push_back({std::move(name), std::move(fn)});
  };

  add("matmul-lhs", [](Rng& rng, double eps) {
    Tensor b = rand_t(rng, {4, 2});
    F f = [b](const Tensor& x) { return ad::sum(ad::matmul(x, b)); };
    return ad::grad_check(f, rand_t(rng, {3, 4}), eps);
  });
  add("matmul-rhs", [](Rng& rng, double eps) {
    Tensor a = rand_t(rng, {3, 4});
    F f = [a](const Tensor& x) { return ad::sum(ad::matmul(a, x)); };
    return ad::grad_check(f, rand_t(rng, {4, 2}), eps);
  });
  add("add-broadcast", [](Rng& rng, double eps) {
    Tensor a = rand_t(rng, {3, 4});
    F f = [a](const Tensor& x) { return ad::sum(ad::add(a, x)); };
    return ad::grad_check(f, rand_t(rng, {4}), eps);
  });
  add("mul-elementwise", [](Rng& rng, double eps) {
    Tensor b = rand_t(rng, {2, 5});
    F f = [b](const Tensor& x) { return ad::sum(ad::mul(x, b)); };
    return ad::grad_check(f, rand_t(rng, {2, 5}), eps);
  });
  add("sigmoid", [](Rng& rng, double eps) {
    F f = [](const Tensor& x) { return ad::sum(ad::sigmoid(x)); };
    return ad::grad_check(f, rand_t(rng, {6}), eps);
  });
  add("tanh", [](Rng& rng, double eps) {
    F f = [](const Tensor& x) { return ad::sum(ad::tanh(x)); };
    return ad::grad_check(f, rand_t(rng, {6}), eps);
  });
  add("relu", [](Rng& rng, double eps) {
    F f = [](const Tensor& x) { return ad::sum(ad::relu(x)); };
    return ad::grad_check(f, rand_t(rng, {8}, true), eps);
  });
  add("concat", [](Rng& rng, double eps) {
    Tensor b = rand_t(rng, {3, 2});
    F f = [b](const Tensor& x) {
      return ad::sum(ad::mul(ad::concat(x, b), ad::concat(x, b)));
    };
    return ad::grad_check(f, rand_t(rng, {3, 3}), eps);
  });
  add("softmax-masked", [](Rng& rng, double eps) {
    Mask mask = {1, 1, 1, 0, 1};
    Tensor w = rand_t(rng, {5});
    F f = [mask, w](const Tensor& x) {
      return ad::sum(ad::mul(ad::softmax_masked(x, mask), w));
    };
    return ad::grad_check(f, rand_t(rng, {5}), eps);
  });
  add("layer-norm", [](Rng& rng, double eps) {
    Tensor gain = rand_t(rng, {6});
    Tensor bias = rand_t(rng, {6});
    F f = [gain, bias](const Tensor& x) {
      Tensor y = ad::layer_norm(x, gain, bias);
      return ad::sum(ad::mul(y, y));
    };
    return ad::grad_check(f, rand_t(rng, {3, 6}), eps);
  });
  add("embedding-lookup", [](Rng& rng, double eps) {
    std::vector<int> ids = {2, 0, 3, 2};
    Mask mask = {1, 0, 1, 1};
    Tensor w = rand_t(rng, {4, 3});
    F f = [ids, mask, w](const Tensor& table) {
      return ad::sum(ad::mul(ad::gather_rows(table, ids, mask), w));
    };
    return ad::grad_check(f, rand_t(rng, {5, 3}), eps);
  });
  add("gru-step-input", [](Rng& rng, double eps) {
    Rng init = rng.fork(11);
    nn::GruParams p = nn::GruParams::init(4, 3, init);
    Tensor h = rand_t(rng, {3});
    F f = [p, h](const Tensor& x) { return ad::sum(nn::gru_step(x, h, p)); };
    return ad::grad_check(f, rand_t(rng, {4}), eps);
  });
  add("gru-step-weight", [](Rng& rng, double eps) {
    Rng init = rng.fork(12);
    nn::GruParams p = nn::GruParams::init(4, 3, init);
    Tensor h = rand_t(rng, {3});
    Tensor x0 = rand_t(rng, {4});
    F f = [&p, h, x0](const Tensor& w) {
      nn::GruParams q = p;
      q.U_h = w;  // probe the candidate path through the reset gate
      return ad::sum(nn::gru_step(x0, h, q));
    };
    return ad::grad_check(f, rand_t(rng, {3, 3}), eps);
  });
  add("lstm-step-input", [](Rng& rng, double eps) {
    Rng init = rng.fork(13);
    nn::LstmParams p = nn::LstmParams::init(4, 3, init);
    Tensor h = rand_t(rng, {3});
    Tensor c = rand_t(rng, {3});
    F f = [p, h, c](const Tensor& x) {
      auto [hn, cn] = nn::lstm_step(x, h, c, p);
      return ad::sum(ad::add(hn, cn));
    };
    return ad::grad_check(f, rand_t(rng, {4}), eps);
  });
  add("birnn-gru", [](Rng& rng, double eps) {
    Rng init = rng.fork(14);
    nn::RnnLayer layer = nn::RnnLayer::init(nn::Cell::Gru, 3, 2, true, init);
    Mask mask = {1, 1, 1, 0};
    F f = [layer, mask](const Tensor& seq) {
      Tensor out = nn::rnn_forward(seq, mask, layer);
      return ad::sum(ad::mul(out, out));
    };
    return ad::grad_check(f, rand_t(rng, {4, 3}), eps);
  });
  add("birnn-lstm", [](Rng& rng, double eps) {
    Rng init = rng.fork(15);
    nn::RnnLayer layer = nn::RnnLayer::init(nn::Cell::Lstm, 3, 2, true, init);
    Mask mask = {1, 1, 1};
    F f = [layer, mask](const Tensor& seq) {
      Tensor out = nn::rnn_forward(seq, mask, layer);
      return ad::sum(ad::mul(out, out));
    };
    return ad::grad_check(f, rand_t(rng, {3, 3}), eps);
  });
  add("attention-pool", [](Rng& rng, double eps) {
    Rng init = rng.fork(16);
    nn::AttnPoolParams p = nn::AttnPoolParams::init(3, 4, init);
    Mask mask = {1, 1, 0, 1};
    F f = [p, mask](const Tensor& states) {
      auto r = nn::attention_pool(states, mask, p);
      return ad::sum(ad::mul(r.context, r.context));
    };
    return ad::grad_check(f, rand_t(rng, {4, 3}), eps);
  });
  add("positional-encoding", [](Rng& rng, double eps) {
    F f = [](const Tensor& x) {
      Tensor pe = nn::positional_encoding(x.dim(0), x.dim(1));
      Tensor y = ad::add(x, pe);
      return ad::sum(ad::mul(y, y));
    };
    return ad::grad_check(f, rand_t(rng, {3, 4}), eps);
  });
  add("mhsa-block", [](Rng& rng, double eps) {
    Rng init = rng.fork(17);
    nn::MhsaParams p = nn::MhsaParams::init(8, 2, 16, init);
    Mask mask = {1, 1, 1, 0};
    F f = [p, mask](const Tensor& states) {
      Tensor out = nn::mhsa_block(states, mask, p);
      return ad::sum(ad::mul(out, out));
    };
    return ad::grad_check(f, rand_t(rng, {4, 8}), eps);
  });
  add("conv-maxpool", [](Rng& rng, double eps) {
    Rng init = rng.fork(18);
    nn::ConvParams p = nn::ConvParams::init(3, {2, 3}, 4, init);
    Mask mask = {1, 1, 1, 1, 1};
    F f = [p, mask](const Tensor& seq) {
      Tensor out = nn::conv1d_maxpool(seq, mask, p);
      return ad::sum(out);
    };
    return ad::grad_check(f, rand_t(rng, {5, 3}, true), eps);
  });
  add("dropout-fixed-mask", [](Rng& rng, double eps) {
    F f = [](const Tensor& x) {
      Rng mask_rng(99);  // same mask on every evaluation
      return ad::sum(nn::dropout(x, 0.5, true, mask_rng));
    };
    return ad::grad_check(f, rand_t(rng, {12}), eps);
  });
  add("dense", [](Rng& rng, double eps) {
    Rng init = rng.fork(19);
    nn::DenseParams p = nn::DenseParams::init(5, 2, init);
    F f = [p](const Tensor& x) { return ad::sum(nn::dense(x, p)); };
    return ad::grad_check(f, rand_t(rng, {5}), eps);
  });
  add("weighted-bce", [](Rng& rng, double eps) {
    std::vector<int> y = {1, 0, 1};
    F f = [y](const Tensor& p) { return ad::weighted_bce_mean(p, y, 0.7, 1.9); };
    return ad::grad_check(f, rand_t(rng, {3}, false), eps);
  });
  add("joint-input-combine", [](Rng& rng, double eps) {
    Tensor pos = rand_t(rng, {3, 2});
    Tensor w = rand_t(rng, {3, 6});
    F f = [pos, w](const Tensor& words) {
      return ad::sum(ad::mul(model::joint_input_combine(words, pos), w));
    };
    return ad::grad_check(f, rand_t(rng, {3, 4}), eps);
  });
  add("joint-latent-combine", [](Rng& rng, double eps) {
    Tensor hp = rand_t(rng, {3});
    F f = [hp](const Tensor& hw) {
      Tensor j = model::joint_latent_combine(hw, hp);
      return ad::sum(ad::mul(j, j));
    };
    return ad::grad_check(f, rand_t(rng, {4}), eps);
  });

  return checks;
}

}  // namespace

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
  std::vector<Check> checks = build_checks();
  if (args.inject_error)
    checks.push_back({"broken-sigmoid-fixture", [](Rng& rng, double eps) {
                        std::function<Tensor(const Tensor&)> f =
                            [](const Tensor& x) {
                              return ad::sum(broken_sigmoid(x));
                            };
                        return ad::grad_check(f, rand_t(rng, {6}), eps);
                      }});

  bool all_ok = true;
  std::string first_failed;
  out << std::scientific << std::setprecision(3);
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Rng rng(args.seed * 7919 + i);
    const double e = checks[i].run(rng, args.eps);
    const bool ok = !std::isnan(e) && e < args.threshold;
    out << (ok ? "ok   " : "FAIL ") << std::left << std::setw(24) << checks[i].name
        << " max_rel_err=" << e << "\n";
    if (!ok && all_ok) {
      all_ok = false;
      first_failed = checks[i].name;
    }
  }
  if (!all_ok) {
    err << "gradcheck: backward rule check failed for " << first_failed << "\n";
    return kRunFailure;
  }
  out << "gradcheck: all " << checks.size() << " layers below " << args.threshold
      << "\n";
  return kOk;
}

}  // namespace hedge::cli
