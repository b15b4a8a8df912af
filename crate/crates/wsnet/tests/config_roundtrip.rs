use proptest::prelude::*;

use wsnet::parse_config;

#[derive(Debug, Clone)]
struct Layer {
    l: usize,
    n: usize,
    s: usize,
    c2: bool,
    d2: bool,
    stride: usize,
    valid: bool,
    bn: bool,
    pool: Option<usize>,
    keep: Option<f64>,
}

fn layer() -> impl Strategy<Value = Layer> {
    (1usize..=8, 1usize..=6, any::<bool>(), any::<bool>(), 1usize..=2, any::<bool>(), any::<bool>())
        .prop_flat_map(|(l, n, c2, d2, stride, valid, bn)| {
            (
                1..=l,
                prop::option::of(2usize..=3),
                prop::option::of(0.5f64..1.0),
            )
                .prop_map(move |(s, pool, keep)| Layer {
                    l,
                    n: 2 * n,
                    s,
                    c2,
                    d2,
                    stride,
                    valid,
                    bn,
                    pool,
                    keep,
                })
        })
}

fn render(input_len: usize, layers: &[Layer], fc_n: usize, lr: f64, seed: u64) -> String {
    let mut t = format!("[network]\ninput_len = {input_len}\n\n");
    for (i, l) in layers.iter().enumerate() {
        t += &format!("[layer c{i}]\nkind = conv\nL = {}\nN = {}\nS = {}\nstride = {}\n", l.l, l.n, l.s, l.stride);
        if l.c2 && i > 0 {
            t += "C = 2\n";
        }
        if l.d2 && l.s % 2 == 0 {
            t += "D = 2\n";
        }
        if l.valid {
            t += "padding = valid\n";
        }
        t += &format!("bn = {}\n", l.bn);
        if let Some(k) = l.pool {
            t += &format!("pool = max\npool_k = {k}\n");
        }
        if let Some(p) = l.keep {
            t += &format!("dropout_keep = {p}\n");
        }
        t += "\n";
    }
    t += &format!("[layer out]\nkind = fc\nN = {fc_n}\n\n[train]\nlr = {lr}\nseed = {seed}\n");
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn printed_config_is_a_fixpoint(
        input_len in 16usize..400,
        layers in prop::collection::vec(layer(), 0..4),
        fc_n in 2usize..6,
        lr in 1e-5f64..1e-1,
        seed in any::<u64>(),
    ) {
        let text = render(input_len, &layers, fc_n, lr, seed);
        let Ok(first) = parse_config(&text) else {
            // geometry can legitimately fail (e.g. a valid conv longer than its input)
            return Ok(());
        };
        let printed = first.to_string();
        let second = parse_config(&printed).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(printed, second.to_string());
    }
}

#[test]
fn representative_config_round_trips() {
    let l = |s, c2, d2, valid| Layer {
        l: 4,
        n: 4,
        s,
        c2,
        d2,
        stride: 2,
        valid,
        bn: true,
        pool: Some(2),
        keep: Some(0.75),
    };
    let text = render(128, &[l(2, false, true, false), l(4, true, true, true)], 3, 0.01, 7);
    let cfg = parse_config(&text).unwrap();
    assert_eq!(parse_config(&cfg.to_string()).unwrap(), cfg);
}
