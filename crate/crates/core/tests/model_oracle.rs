//! Layer examples and an independent straight-line re-implementation of
//! the forward pass.

use std::sync::Arc;

use cellcast::data::{MultimodalWindow, SpatialGraph};
use cellcast::model::layers::*;
use cellcast::model::{predict, HeadKind, ModelConfig, ParameterSet, WindowBatch};
use cellcast::numerics::{rng, Graph, Mat, Tensor, Var};
use rand::Rng;

type M = Vec<Vec<f64>>;

fn mm(a: &M, b: &M) -> M {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

fn tensor_m(t: &Tensor) -> M {
    let (r, c) = t.as_matrix_dims();
    (0..r).map(|i| t.data()[i * c..(i + 1) * c].to_vec()).collect()
}

fn rows_of(flat: &[f64], cols: usize) -> M {
    flat.chunks(cols).map(<[f64]>::to_vec).collect()
}

fn add_bias(a: &M, b: &M) -> M {
    a.iter()
        .map(|r| r.iter().zip(&b[0]).map(|(x, y)| x + y).collect())
        .collect()
}

fn map(a: &M, f: impl Fn(f64) -> f64) -> M {
    a.iter().map(|r| r.iter().map(|&x| f(x)).collect()).collect()
}

fn zip(a: &M, b: &M, f: impl Fn(f64, f64) -> f64) -> M {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(&x, &y)| f(x, y)).collect())
        .collect()
}

fn layer_norm(a: &M) -> M {
    a.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mu = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
            r.iter().map(|x| (x - mu) / (var + 1e-5).sqrt()).collect()
        })
        .collect()
}

fn softmax(r: &[f64]) -> Vec<f64> {
    let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = r.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn transpose(a: &M) -> M {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

struct Oracle<'a> {
    cfg: &'a ModelConfig,
    p: &'a ParameterSet,
}

impl Oracle<'_> {
    fn w(&self, name: &str) -> M {
        tensor_m(self.p.body.get(name).or_else(|| self.p.head.get(name)).unwrap())
    }

    fn conv(&self, img: &M, k: &M, b: &M) -> M {
        let [wn, hn, _] = self.cfg.image;
        let c = img[0].len();
        let mut out = Vec::new();
        for x in 0..wn {
            for y in 0..hn {
                let mut patch = vec![0.0; 9 * c];
                for kx in 0..3 {
                    for ky in 0..3 {
                        let (sx, sy) = (x as isize + kx as isize - 1, y as isize + ky as isize - 1);
                        if sx < 0 || sy < 0 || sx >= wn as isize || sy >= hn as isize {
                            continue;
                        }
                        let src = &img[sx as usize * hn + sy as usize];
                        for ch in 0..c {
                            patch[(kx * 3 + ky) * c + ch] = src[ch];
                        }
                    }
                }
                let o: Vec<f64> = (0..k[0].len())
                    .map(|j| (0..9 * c).map(|t| patch[t] * k[t][j]).sum::<f64>() + b[0][j])
                    .collect();
                out.push(o.into_iter().map(|v: f64| v.max(0.0)).collect());
            }
        }
        out
    }

    fn branch(&self, br: &str, x_tra: &M, x_txt: &M, a_hat: &M, img: &M) -> M {
        let t = x_tra.len();
        let mut prev: Option<M> = None;
        for s in 0..self.cfg.blocks {
            let q = |n: &str| self.w(&format!("{br}{s}.{n}"));
            let h_tra = match prev.take() {
                None => add_bias(&mm(x_tra, &q("embed_tra.w")), &q("embed_tra.b")),
                Some(v) => v,
            };
            let h_txt = add_bias(&mm(x_txt, &q("embed_txt.w")), &q("embed_txt.b"));
            let z = map(&zip(&h_tra, &h_txt, |a, b| a + b), |x| 1.0 / (1.0 + (-x).exp()));
            let mut fused = h_tra.clone();
            for i in 0..t {
                for j in 0..fused[0].len() {
                    fused[i][j] = z[i][j] * h_tra[i][j] + (1.0 - z[i][j]) * h_txt[i][j];
                }
            }
            let (qq, kk, vv) = (
                mm(&fused, &q("attn.wq")),
                mm(&fused, &q("attn.wk")),
                mm(&fused, &q("attn.wv")),
            );
            let mut heads: Vec<M> = Vec::new();
            for h in 0..self.cfg.heads {
                let qi = mm(&qq, &q(&format!("attn.h{h}.wq")));
                let ki = mm(&kk, &q(&format!("attn.h{h}.wk")));
                let vi = mm(&vv, &q(&format!("attn.h{h}.wv")));
                let da = qi[0].len() as f64;
                let scores = map(&mm(&qi, &transpose(&ki)), |x| x / da.sqrt());
                let probs: M = scores.iter().map(|r| softmax(r)).collect();
                heads.push(mm(&probs, &vi));
            }
            let cat: M = (0..t)
                .map(|i| heads.iter().flat_map(|h| h[i].clone()).collect())
                .collect();
            let attn = mm(&cat, &q("attn.wo"));
            let ln = |x: &M, g: M, b: M| add_bias(&zip(&layer_norm(x), &vec![g[0].clone(); t], |a, b| a * b), &b);
            let a1 = ln(&zip(&fused, &attn, |a, b| a + b), q("ln1.g"), q("ln1.b"));
            let f = add_bias(
                &mm(
                    &map(&add_bias(&mm(&a1, &q("ffn.w1")), &q("ffn.b1")), |x| x.max(0.0)),
                    &q("ffn.w2"),
                ),
                &q("ffn.b2"),
            );
            let temporal = ln(&zip(&a1, &f, |a, b| a + b), q("ln2.g"), q("ln2.b"));
            let gcn = map(&add_bias(&mm(&mm(x_tra, a_hat), &q("gcn.w")), &q("gcn.b")), |x| {
                x.max(0.0)
            });
            let c1 = self.conv(img, &q("cnn.k1"), &q("cnn.b1"));
            let c2 = self.conv(&c1, &q("cnn.k2"), &q("cnn.b2"));
            let n = c2.len() as f64;
            let pooled: M = vec![(0..c2[0].len())
                .map(|j| c2.iter().map(|r| r[j]).sum::<f64>() / n)
                .collect()];
            let cnn = add_bias(&mm(&pooled, &q("cnn.proj")), &q("cnn.pb"));
            let cnn_t = vec![cnn[0].clone(); t];
            prev = Some(zip(&temporal, &zip(&gcn, &cnn_t, |a, b| a * b), |a, b| a * b));
        }
        let h = prev.unwrap();
        vec![(0..h[0].len())
            .map(|j| h.iter().map(|r| r[j]).sum::<f64>() / t as f64)
            .collect()]
    }

    fn forward(&self, w: &MultimodalWindow, a_hat: &M) -> Vec<f64> {
        let (d, dt) = (self.cfg.cells, self.cfg.text_dims);
        let img = rows_of(w.image.data(), self.cfg.image[2]);
        let hc = self.branch(
            "c",
            &rows_of(&w.closeness_tra, d),
            &rows_of(&w.closeness_txt, dt),
            a_hat,
            &img,
        );
        let hp = self.branch(
            "p",
            &rows_of(&w.period_tra, d),
            &rows_of(&w.period_txt, dt),
            a_hat,
            &img,
        );
        let b = self.w("head.b");
        let y = match self.cfg.head {
            HeadKind::Matrix => zip(&mm(&hc, &self.w("head.w1")), &mm(&hp, &self.w("head.w2")), |a, b| a + b),
            HeadKind::Scalar => {
                let (w1, w2) = (self.w("head.w1")[0][0], self.w("head.w2")[0][0]);
                mm(&zip(&hc, &hp, |a, b| w1 * a + w2 * b), &self.w("head.proj"))
            }
        };
        add_bias(&y, &b).remove(0)
    }
}

fn random_case(cfg: &ModelConfig, seed: u64) -> (ParameterSet, Vec<MultimodalWindow>, SpatialGraph) {
    let mut r = rng::stream(seed, 1);
    let mut params = ParameterSet::init(cfg, seed).unwrap().all();
    let flat: Vec<f64> = (0..params.numel()).map(|_| r.gen_range(-0.7..0.7)).collect();
    params.set_flat(&flat).unwrap();
    let params = ParameterSet::from_all(cfg, params).unwrap();
    let mut v = |k: usize| -> Vec<f64> { (0..k).map(|_| r.gen_range(-1.0..1.0)).collect() };
    let image = Arc::new(Tensor::new(cfg.image.to_vec(), v(cfg.image.iter().product())).unwrap());
    let windows = (0..3)
        .map(|i| MultimodalWindow {
            target_index: i,
            horizon: 1,
            closeness_tra: v(cfg.closeness * cfg.cells),
            closeness_txt: v(cfg.closeness * cfg.text_dims),
            period_tra: v(cfg.period * cfg.cells),
            period_txt: v(cfg.period * cfg.text_dims),
            target: v(cfg.cells),
            image: Arc::clone(&image),
        })
        .collect();
    let n = cfg.cells;
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let x = v(1)[0].abs();
            w[i * n + j] = x;
            w[j * n + i] = x;
        }
    }
    (params, windows, SpatialGraph::new(n, w).unwrap())
}

#[test]
fn forward_matches_straight_line_oracle() {
    for seed in 0..6u64 {
        let head = if seed % 2 == 0 {
            HeadKind::Matrix
        } else {
            HeadKind::Scalar
        };
        let cfg = ModelConfig {
            hidden: 4 + 4 * (seed as usize % 2),
            heads: 2,
            blocks: 1 + seed as usize % 2,
            dropout: 0.1,
            cnn_channels: 2,
            closeness: 3,
            period: 2,
            cells: 3,
            text_dims: 5,
            image: [3, 4, 2],
            head,
        };
        let (params, windows, graph) = random_case(&cfg, seed);
        let batch = WindowBatch::new(&cfg, &windows, &graph).unwrap();
        let y = predict(&cfg, &params, &batch).unwrap();
        let a_hat = rows_of(&graph.normalized_with_self_loops(), cfg.cells);
        let oracle = Oracle { cfg: &cfg, p: &params };
        for (i, w) in windows.iter().enumerate() {
            let o = oracle.forward(w, &a_hat);
            for (a, b) in y[i * cfg.cells..(i + 1) * cfg.cells].iter().zip(&o) {
                assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "seed {seed}: {a} vs {b}");
            }
        }
    }
}

fn mat(g: &mut Graph<f64>, rows: usize, cols: usize, data: &[f64]) -> Var {
    g.constant(Mat::from_f64(rows, cols, data))
}

fn eye(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    v
}

#[test]
fn embed_examples() {
    let mut g = Graph::<f64>::new();
    let x = mat(&mut g, 2, 3, &[0.0; 6]);
    let t = mat(&mut g, 2, 2, &[0.0; 4]);
    let w = mat(&mut g, 3, 3, &[0.4; 9]);
    let wt = mat(&mut g, 2, 3, &[0.2; 6]);
    let zb = mat(&mut g, 1, 3, &[0.0; 3]);
    let (a, b) = embed(&mut g, x, t, (w, zb), (wt, zb)).unwrap();
    assert!(g.value(a).data.iter().chain(&g.value(b).data).all(|&v| v == 0.0));
    let xs = [1.5, -2.0, 0.25, 3.0, 0.0, -1.0];
    let x = mat(&mut g, 2, 3, &xs);
    let i3 = mat(&mut g, 3, 3, &eye(3));
    let (a, _) = embed(&mut g, x, t, (i3, zb), (wt, zb)).unwrap();
    assert_eq!(g.value(a).data, xs);
}

#[test]
fn fusion_gate_examples() {
    let mut g = Graph::<f64>::new();
    let z = mat(&mut g, 1, 2, &[0.0, 0.0]);
    let out = fusion_gate(&mut g, z, z).unwrap();
    assert_eq!(g.value(out).data, [0.0, 0.0]);
    let x = mat(&mut g, 1, 3, &[-4.0, 0.3, 7.5]);
    let out = fusion_gate(&mut g, x, x).unwrap();
    for (a, b) in g.value(out).data.iter().zip([-4.0, 0.3, 7.5]) {
        assert!((a - b).abs() < 1e-15);
    }
    let a = mat(&mut g, 1, 1, &[2.0]);
    let b = mat(&mut g, 1, 1, &[-2.0]);
    let out = fusion_gate(&mut g, a, b).unwrap();
    assert!(g.value(out).data[0].abs() < 1e-15);
}

#[test]
fn fusion_gate_is_bounded_by_inputs() {
    let mut r = rng::stream(4, 0);
    for _ in 0..200 {
        let a: Vec<f64> = (0..6).map(|_| r.gen_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| r.gen_range(-5.0..5.0)).collect();
        let mut g = Graph::<f64>::new();
        let (va, vb) = (mat(&mut g, 2, 3, &a), mat(&mut g, 2, 3, &b));
        let out = fusion_gate(&mut g, va, vb).unwrap();
        for ((o, x), y) in g.value(out).data.iter().zip(&a).zip(&b) {
            assert!(*o >= x.min(*y) - 1e-12 && *o <= x.max(*y) + 1e-12);
        }
    }
}

fn attention_params(g: &mut Graph<f64>, d: usize, heads: usize, seed: u64) -> AttentionParams {
    let mut r = rng::stream(seed, 3);
    let mut m = |rows: usize, cols: usize| {
        let data: Vec<f64> = (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect();
        g.constant(Mat::from_f64(rows, cols, &data))
    };
    let da = d / heads;
    AttentionParams {
        wq: m(d, d),
        wk: m(d, d),
        wv: m(d, d),
        heads: (0..heads).map(|_| (m(d, da), m(d, da), m(d, da))).collect(),
        wo: m(d, d),
    }
}

#[test]
fn attention_single_key_is_a_weight_chain() {
    let mut g = Graph::<f64>::new();
    let p = attention_params(&mut g, 4, 2, 1);
    let xs = [0.3, -1.0, 2.0, 0.5];
    let x = mat(&mut g, 1, 4, &xs);
    let out = multi_head_attention(&mut g, x, &p, 1).unwrap();
    // softmax over one key is 1, so each head is x·W^V·W_i^v
    let wv = g.matmul(x, p.wv).unwrap();
    let parts: Vec<Var> = p.heads.iter().map(|h| g.matmul(wv, h.2).unwrap()).collect();
    let cat = g.concat_cols(&parts).unwrap();
    let expect = g.matmul(cat, p.wo).unwrap();
    assert_eq!(g.value(out).data, g.value(expect).data);
}

#[test]
fn attention_equal_rows_give_equal_outputs() {
    let mut g = Graph::<f64>::new();
    let p = attention_params(&mut g, 4, 2, 2);
    let row = [0.1, 0.9, -0.4, 1.2];
    let x = mat(&mut g, 3, 4, &row.repeat(3));
    let out = multi_head_attention(&mut g, x, &p, 3).unwrap();
    let v = g.value(out);
    for r in 1..3 {
        for c in 0..4 {
            assert!((v.at(r, c) - v.at(0, c)).abs() < 1e-14);
        }
    }
}

#[test]
fn ffn_examples_and_layer_norm_moments() {
    let mut g = Graph::<f64>::new();
    let i3 = mat(&mut g, 3, 3, &eye(3));
    let zb = mat(&mut g, 1, 3, &[0.0; 3]);
    let x = mat(&mut g, 1, 3, &[0.5, 2.0, 0.0]);
    let y = ffn(&mut g, x, i3, zb, i3, zb).unwrap();
    assert_eq!(g.value(y).data, [0.5, 2.0, 0.0]);
    let neg = mat(&mut g, 2, 3, &[-1.0, -0.5, -3.0, 0.0, -2.0, -0.1]);
    let b2 = mat(&mut g, 1, 3, &[0.7, -0.2, 4.0]);
    let y = ffn(&mut g, neg, i3, zb, i3, b2).unwrap();
    assert_eq!(g.value(y).data, [0.7, -0.2, 4.0, 0.7, -0.2, 4.0]);

    let mut r = rng::stream(8, 0);
    let data: Vec<f64> = (0..40).map(|_| r.gen_range(-3.0..3.0)).collect();
    let x = mat(&mut g, 5, 8, &data);
    let n = g.layer_norm_rows(x);
    for row in g.value(n).data.chunks(8) {
        let mu = row.iter().sum::<f64>() / 8.0;
        let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 8.0;
        let raw_var = {
            let idx = g.value(n).data.chunks(8).position(|c| c == row).unwrap();
            let src = &data[idx * 8..idx * 8 + 8];
            let m = src.iter().sum::<f64>() / 8.0;
            src.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 8.0
        };
        assert!(mu.abs() < 1e-10);
        // the epsilon in the denominator shifts the variance by eps/(σ²+eps)
        assert!((var - raw_var / (raw_var + 1e-5)).abs() < 1e-10);
    }
}

#[test]
fn gcn_examples() {
    let mut g = Graph::<f64>::new();
    let graph = SpatialGraph::empty(3);
    let a_hat = graph.normalized_with_self_loops();
    assert_eq!(a_hat, eye(3));
    let a = mat(&mut g, 3, 3, &a_hat);
    let w = mat(&mut g, 3, 2, &[1.0, -1.0, 0.5, 2.0, -0.3, 0.1]);
    let b = mat(&mut g, 1, 2, &[0.0, 0.0]);
    let x = mat(&mut g, 1, 3, &[1.0, 2.0, 3.0]);
    let out = gcn_layer(&mut g, x, a, w, b).unwrap();
    let expect: Vec<f64> = vec![(1.0 + 1.0 - 0.9_f64).max(0.0), (-1.0 + 4.0 + 0.3_f64).max(0.0)];
    for (o, e) in g.value(out).data.iter().zip(expect) {
        assert!((o - e).abs() < 1e-14);
    }
    // two identical, fully connected cells with identical inputs
    let graph = SpatialGraph::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let a = mat(&mut g, 2, 2, &graph.normalized_with_self_loops());
    let x = mat(&mut g, 1, 2, &[0.8, 0.8]);
    let agg = g.matmul(x, a).unwrap();
    let v = &g.value(agg).data;
    assert_eq!(v[0], v[1]);
}

fn cnn_params(g: &mut Graph<f64>, c: usize, ch: usize, d: usize, k1: Vec<f64>, k2: Vec<f64>, bias: f64) -> CnnParams {
    CnnParams {
        k1: mat(g, 9 * c, ch, &k1),
        b1: mat(g, 1, ch, &vec![bias; ch]),
        k2: mat(g, 9 * ch, ch, &k2),
        b2: mat(g, 1, ch, &vec![bias; ch]),
        proj: mat(g, ch, d, &eye(d)[..ch * d]),
        pb: mat(g, 1, d, &vec![bias; d]),
    }
}

#[test]
fn cnn_examples() {
    let mut g = Graph::<f64>::new();
    let p = cnn_params(&mut g, 1, 2, 2, vec![0.3; 18], vec![-0.2; 36], 0.0);
    let img = mat(&mut g, 16, 1, &[0.0; 16]);
    let out = cnn_features(&mut g, img, &p, 4, 4).unwrap();
    assert_eq!(g.value(out).data, [0.0, 0.0]);

    // 1×1-equivalent kernels: only the centre tap is nonzero and each
    // output channel reads one input channel with weight 1, so a constant
    // image of value 2 stays constant through both layers.
    let mut k1 = vec![0.0; 9];
    k1[4] = 1.5;
    let mut k2 = vec![0.0; 9];
    k2[4] = 2.0;
    let p = cnn_params(&mut g, 1, 1, 1, k1, k2, 0.0);
    let img = mat(&mut g, 12, 1, &[2.0; 12]);
    let out = cnn_features(&mut g, img, &p, 3, 4).unwrap();
    assert!((g.value(out).data[0] - 2.0 * 1.5 * 2.0).abs() < 1e-14);
}

#[test]
fn st_block_examples() {
    let mut r = rng::stream(5, 0);
    let mut g = Graph::<f64>::new();
    let mut rand = |g: &mut Graph<f64>| {
        let d: Vec<f64> = (0..6).map(|_| r.gen_range(-2.0..2.0)).collect();
        mat(g, 2, 3, &d)
    };
    let (t, s) = (rand(&mut g), rand(&mut g));
    let ones = mat(&mut g, 2, 3, &[1.0; 6]);
    let zeros = mat(&mut g, 2, 3, &[0.0; 6]);
    let spatial = g.mul(s, ones).unwrap();
    assert_eq!(g.value(spatial).data, g.value(s).data);
    let out = st_block(&mut g, t, s, zeros).unwrap();
    assert!(g.value(out).data.iter().all(|&v| v == 0.0));
    let c = rand(&mut g);
    let left = g.mul(t, s).unwrap();
    let left = g.mul(left, c).unwrap();
    let right = st_block(&mut g, t, s, c).unwrap();
    for (a, b) in g.value(left).data.iter().zip(&g.value(right).data) {
        assert!((a - b).abs() <= 1e-15 * (1.0 + a.abs()));
    }
}
