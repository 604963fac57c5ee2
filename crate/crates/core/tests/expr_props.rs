use proptest::prelude::*;

use relayflow::expr::{parse, BinOp, ExprError, Expression, Func, Node};

fn leaf() -> impl Strategy<Value = Node> {
    prop_oneof![
        (-5.0f64..5.0).prop_map(Node::constant),
        (1usize..=3).prop_map(Node::var),
    ]
}

/// Trees that evaluate finitely near the sample points: no division, and
/// only small integer powers.
fn tree() -> impl Strategy<Value = Node> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::binary(BinOp::Add, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::binary(BinOp::Sub, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::binary(BinOp::Mul, a, b)),
            (inner.clone(), 0u32..4).prop_map(|(a, k)| Node::binary(BinOp::Pow, a, Node::constant(k as f64))),
            inner.clone().prop_map(|a| Node::call(Func::Sin, a)),
            inner.clone().prop_map(|a| Node::call(Func::Tanh, a)),
            inner.prop_map(|a| Node::call(Func::Cos, a)),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, 3)
}

proptest! {
    #[test]
    fn printed_form_parses_back(node in tree(), x in point()) {
        let e = Expression::from_node(node, 3).unwrap();
        let text = e.to_string();
        let back = parse(&text, 3).unwrap();
        let (a, b) = (e.evaluate(&x).unwrap(), back.evaluate(&x).unwrap());
        prop_assert_eq!(a.to_bits(), b.to_bits(), "{} -> {}", text, back);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn gradient_is_linear(f in tree(), g in tree(), a in -3.0f64..3.0, b in -3.0f64..3.0, x in point()) {
        let combo = Node::binary(
            BinOp::Add,
            Node::binary(BinOp::Mul, Node::constant(a), f.clone()),
            Node::binary(BinOp::Mul, Node::constant(b), g.clone()),
        );
        let gf = Expression::from_node(f, 3).unwrap().gradient(&x).unwrap();
        let gg = Expression::from_node(g, 3).unwrap().gradient(&x).unwrap();
        let gc = Expression::from_node(combo, 3).unwrap().gradient(&x).unwrap();
        for k in 0..3 {
            let expect = a * gf[k] + b * gg[k];
            prop_assert!((gc[k] - expect).abs() <= 1e-9 * (1.0 + expect.abs()), "{} vs {}", gc[k], expect);
        }
    }

    #[test]
    fn gradient_matches_differences(node in tree(), x in point()) {
        let e = Expression::from_node(node, 3).unwrap();
        let g = e.gradient(&x).unwrap();
        for k in 0..3 {
            let h = 1e-6;
            let mut p = x.clone();
            let mut m = x.clone();
            p[k] += h;
            m[k] -= h;
            let fd = (e.evaluate(&p).unwrap() - e.evaluate(&m).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() <= 1e-4 * (1.0 + g[k].abs()), "{} vs {}", fd, g[k]);
        }
    }
}

#[test]
fn documented_examples() {
    let e = parse("0.09 - ((x1-1)^2 + x2^2)", 2).unwrap();
    assert!((e.evaluate(&[1.3, 0.0]).unwrap()).abs() < 1e-15);
    let g = e.gradient(&[1.3, 0.0]).unwrap();
    assert!((g[0] + 0.6).abs() < 1e-15 && g[1] == 0.0);

    let v = parse("-x2", 2).unwrap();
    assert_eq!(v.gradient(&[0.3, 0.7]).unwrap(), vec![0.0, -1.0]);

    match parse("sin(x3", 3) {
        Err(ExprError::Syntax { position, message }) => {
            assert_eq!(position, 6);
            assert!(message.contains("')'"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(parse("x3 + 1", 2), Err(ExprError::UnknownVariable { .. })));
    assert!(matches!(parse("x0", 2), Err(ExprError::UnknownVariable { .. })));
}

#[test]
fn evaluation_errors() {
    let e = parse("sqrt(x1)", 1).unwrap();
    assert!(e.evaluate(&[-1.0]).is_err());
    let e = parse("1 / x1", 1).unwrap();
    assert!(e.evaluate(&[0.0]).is_err());
}
