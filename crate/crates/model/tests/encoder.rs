// SPDX-License-Identifier: Apache-2.0

use netreason_core::random::{random_netlist, RandomNetlistConfig};
use netreason_core::{build_tag_graph, parse_netlist, CellLibrary, TaGraph};
use netreason_model::encoder::{encode, encoder_grad_check, featurize, EncoderLayer};
use netreason_model::tape::Mat;
use netreason_model::{EncoderConfig, EncoderParams, FeatureConfig, Parameters};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const AND: &str =
    "module m(a, b, y); input a, b; output y; AND2 g0(.A(a), .B(b), .Y(y)); endmodule";

fn graph(src: &str) -> TaGraph {
    let lib = CellLibrary::builtin();
    build_tag_graph(&parse_netlist(src, &lib).unwrap(), &lib).unwrap()
}

fn random_graph(seed: u64) -> TaGraph {
    let lib = CellLibrary::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = RandomNetlistConfig {
        max_gates: 12,
        ..RandomNetlistConfig::default()
    };
    build_tag_graph(&random_netlist(&mut rng, &lib, &cfg, "r"), &lib).unwrap()
}

#[test]
fn isolated_identical_nodes_share_embedding() {
    let src = "module m(a, b, c, y); input a, b, c; output y; INV g0(.A(a), .Y(y)); endmodule";
    let g = graph(src);
    // keep only the three primary inputs, without edges
    let g = TaGraph {
        nodes: g.nodes[..3].to_vec(),
        edges: vec![],
    };
    let e = encode(&g, &EncoderParams::init(&EncoderConfig::default())).unwrap();
    for i in 1..3 {
        assert_eq!(e.node(i), e.node(0));
    }
    for (a, b) in e.graph.iter().zip(e.node(0)) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn permutation_equivariance() {
    let p = EncoderParams::init(&EncoderConfig {
        seed: 5,
        ..EncoderConfig::default()
    });
    for seed in 0..20 {
        let g = random_graph(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let mut perm: Vec<usize> = (0..g.len()).collect();
        perm.shuffle(&mut rng);
        let gp = g.permuted(&perm);
        let (e, ep) = (encode(&g, &p).unwrap(), encode(&gp, &p).unwrap());
        // summation order differs after renumbering
        for (a, b) in e.graph.iter().zip(&ep.graph) {
            assert!((a - b).abs() < 1e-12);
        }
        for (i, &pi) in perm.iter().enumerate() {
            for (a, b) in e.node(i).iter().zip(ep.node(pi)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn identity_layer_matches_hand_forward() {
    let g = graph(AND);
    let fc = FeatureConfig::default();
    let f = fc.len();
    let p = EncoderParams {
        features: fc,
        layers: vec![EncoderLayer {
            w_self: Mat::eye(f),
            w_nbr: Some(Mat::zeros((f, f))),
            bias: Mat::zeros((1, f)),
        }],
    };
    // hand-written feature rows: a, b, g0, y
    let mut rows = vec![vec![0.0f64; f]; 4];
    let fam = fc.family_offset();
    let kind = fc.kind_offset();
    rows[0][fam + 8] = 1.0;
    rows[0][kind] = 1.0;
    rows[1][fam + 8] = 1.0;
    rows[1][kind] = 1.0;
    rows[2][1] = 1.0; // AND count
    rows[2][4] = 1.0; // depth
    rows[2][5] = 2.0; // support
    rows[2][fam + 1] = 1.0;
    rows[2][kind + 1] = 1.0;
    let sig = featurize(&g.nodes[2], &fc)[fc.signature_offset()..kind]
        .iter()
        .position(|x| *x == 1.0)
        .unwrap();
    rows[2][fc.signature_offset() + sig] = 1.0;
    rows[3][fam + 9] = 1.0;
    rows[3][kind + 3] = 1.0;

    let e = encode(&g, &p).unwrap();
    for j in 0..f {
        let expect = rows.iter().map(|r| r[j].tanh()).sum::<f64>() / 4.0;
        assert!((e.graph[j] - expect).abs() < 1e-15, "column {j}");
    }
    assert!((e.graph[5] - 2f64.tanh() / 4.0).abs() < 1e-15);
}

#[test]
fn encode_is_bitwise_deterministic() {
    let g = random_graph(3);
    let p = EncoderParams::init(&EncoderConfig::default());
    let (a, b) = (encode(&g, &p).unwrap(), encode(&g, &p).unwrap());
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.graph), bits(&b.graph));
    assert_eq!(
        bits(a.nodes.as_slice().unwrap()),
        bits(b.nodes.as_slice().unwrap())
    );
}

fn small_params(seed: u64, bound: f64) -> EncoderParams {
    EncoderParams::init(&EncoderConfig {
        layers: 2,
        d_enc: 8,
        seed,
        init_bound: bound,
        ..EncoderConfig::default()
    })
}

fn probe(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn gradient_check_on_random_graphs() {
    for seed in 0..4 {
        let g = random_graph(seed);
        let p = small_params(seed, 0.5);
        let err = encoder_grad_check(&g, &p, &probe(8, seed), 1e-4).unwrap();
        assert!(err < 1e-3, "seed {seed}: {err}");
    }
}

#[test]
fn gradient_check_linear_regime() {
    // tiny weights keep tanh in its linear region
    let g = graph(AND);
    let p = small_params(1, 1e-3);
    let err = encoder_grad_check(&g, &p, &probe(8, 9), 1e-4).unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn zero_weights_pass_gradient_only_to_last_bias() {
    let g = random_graph(7);
    let mut p = EncoderParams::init(&EncoderConfig::default());
    for t in p.tensors_mut() {
        t.fill(0.0);
    }
    let pr = probe(64, 2);
    let input = netreason_model::encoder::GraphInput::new(&g, &p.features);
    let probe_m = Mat::from_shape_vec((64, 1), pr.clone()).unwrap();
    let grad = netreason_model::encoder::encoder_probe_grad(&input, &p, &probe_m).unwrap();
    let names = grad.names();
    for (name, t) in names.iter().zip(grad.tensors()) {
        if name == "enc.2.bias" {
            for (a, b) in t.iter().zip(&pr) {
                assert!((a - b).abs() < 1e-15);
            }
        } else {
            assert!(t.iter().all(|x| *x == 0.0), "{name}");
        }
    }
    assert!(encoder_grad_check(&g, &p, &pr, 1e-4).unwrap() < 1e-6);
}

#[test]
fn weak_encoder_ignores_neighbours() {
    let p = EncoderParams::init(&EncoderConfig::weak(16, 0));
    let g = graph(AND);
    let lone = TaGraph {
        nodes: g.nodes.clone(),
        edges: vec![],
    };
    assert_eq!(encode(&g, &p).unwrap(), encode(&lone, &p).unwrap());
}
