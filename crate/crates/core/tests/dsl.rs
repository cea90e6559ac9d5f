use gentwistor::dsl::{line_col, load_metric_str, parse, parse_config, DslError, EvalError};
use gentwistor::riemann::{curvature_operator, metric_by_name, P4};
use proptest::prelude::*;

/// Independent expression model: generated here, rendered to text with
/// minimal parentheses, and evaluated without the library.
#[derive(Debug, Clone)]
enum E {
    Num(f64),
    Var(usize),
    Neg(Box<E>),
    Add(Box<E>, Box<E>),
    Sub(Box<E>, Box<E>),
    Mul(Box<E>, Box<E>),
    Div(Box<E>, Box<E>),
    Pow(Box<E>, Box<E>),
    Call(&'static str, Box<E>),
}

const FUNCS: [&str; 5] = ["sin", "cos", "exp", "sqrt", "log"];

fn expr() -> impl Strategy<Value = E> {
    let leaf = prop_oneof![
        (0u32..200).prop_map(|k| E::Num(k as f64 / 8.0)),
        (0usize..4).prop_map(E::Var),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        let b = |e: E| Box::new(e);
        prop_oneof![
            inner.clone().prop_map(move |a| E::Neg(b(a))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| E::Add(b(x), b(y))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| E::Sub(b(x), b(y))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| E::Mul(b(x), b(y))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| E::Div(b(x), b(y))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| E::Pow(b(x), b(y))),
            (0usize..5, inner).prop_map(move |(f, a)| E::Call(FUNCS[f], b(a))),
        ]
    })
}

/// Binding strength of the form a node prints as.
fn level(e: &E) -> u8 {
    match e {
        E::Add(..) | E::Sub(..) => 1,
        E::Mul(..) | E::Div(..) => 2,
        E::Neg(..) => 3,
        E::Pow(..) => 4,
        E::Num(..) | E::Var(..) | E::Call(..) => 5,
    }
}

fn wrap(e: &E, min: u8) -> String {
    let s = render(e);
    if level(e) < min {
        format!("({s})")
    } else {
        s
    }
}

fn render(e: &E) -> String {
    match e {
        E::Num(v) => format!("{v}"),
        E::Var(i) => format!("x{}", i + 1),
        E::Neg(a) => format!("-{}", wrap(a, 3)),
        // Left-associative: the right operand needs a strictly tighter form.
        E::Add(a, b) => format!("{} + {}", wrap(a, 1), wrap(b, 2)),
        E::Sub(a, b) => format!("{} - {}", wrap(a, 1), wrap(b, 2)),
        E::Mul(a, b) => format!("{}*{}", wrap(a, 2), wrap(b, 3)),
        E::Div(a, b) => format!("{}/{}", wrap(a, 2), wrap(b, 3)),
        // The base must be primary; the exponent may be any unary.
        E::Pow(a, b) => format!("{}^{}", wrap(a, 5), wrap(b, 3)),
        E::Call(f, a) => format!("{f}({})", render(a)),
    }
}

/// `None` wherever the language defines an evaluation error.
fn reference(e: &E, p: &[f64; 4]) -> Option<f64> {
    let v = match e {
        E::Num(v) => *v,
        E::Var(i) => p[*i],
        E::Neg(a) => -reference(a, p)?,
        E::Add(a, b) => reference(a, p)? + reference(b, p)?,
        E::Sub(a, b) => reference(a, p)? - reference(b, p)?,
        E::Mul(a, b) => reference(a, p)? * reference(b, p)?,
        E::Div(a, b) => {
            let (x, y) = (reference(a, p)?, reference(b, p)?);
            if y == 0.0 {
                return None;
            }
            x / y
        }
        E::Pow(a, b) => reference(a, p)?.powf(reference(b, p)?),
        E::Call(f, a) => {
            let x = reference(a, p)?;
            match *f {
                "sin" => x.sin(),
                "cos" => x.cos(),
                "exp" => x.exp(),
                "sqrt" if x >= 0.0 => x.sqrt(),
                "log" if x > 0.0 => x.ln(),
                _ => return None,
            }
        }
    };
    v.is_finite().then_some(v)
}

fn point() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-2.0..2.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn evaluation_matches_reference(e in expr(), p in point()) {
        let src = render(&e);
        let parsed = parse(&src).map_err(|err| TestCaseError::fail(format!("{src}: {err}")))?;
        match (reference(&e, &p), parsed.eval(&p)) {
            (Some(want), Ok(got)) => prop_assert!(
                got == want || (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                "{src}: {got} vs {want}"
            ),
            (None, Err(_)) => {}
            (want, got) => prop_assert!(false, "{src}: reference {want:?}, parser {got:?}"),
        }
    }

    #[test]
    fn display_round_trips(e in expr()) {
        let once = parse(&render(&e)).unwrap();
        let twice = parse(&once.to_string()).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.to_string(), twice.to_string());
    }
}

fn ev(s: &str) -> f64 {
    parse(s).unwrap().eval(&[1.0, 2.0, 3.0, 4.0]).unwrap()
}

#[test]
fn precedence_cases() {
    assert_eq!(ev("1 - 2 - 3"), -4.0);
    assert_eq!(ev("2*3^2"), 18.0);
    assert_eq!(ev("-x2^2"), -4.0);
    assert_eq!(ev("(-x2)^2"), 4.0);
    assert_eq!(ev("x4/x2*x3"), 6.0);
    assert_eq!(ev("2^x1^x2"), 2.0);
    assert_eq!(ev("--x1"), 1.0);
    assert_eq!(ev("x2^-x1"), 0.5);
    assert_eq!(ev("1e-3*1E3"), 1.0);
    assert!((ev("cos(pi)") + 1.0).abs() < 1e-15);
}

#[test]
fn syntax_diagnostics() {
    let e = parse("1 + * 2").unwrap_err();
    assert_eq!(e.offset, 4);
    assert!(e.expected.contains(&"x1..x4"));
    let e = parse("sin(x1").unwrap_err();
    assert_eq!(e.offset, 6);
    assert_eq!(e.found, "end of input");
    let e = parse("x5 + 1").unwrap_err();
    assert_eq!(e.offset, 0);
    let e = parse("2 $ 3").unwrap_err();
    assert_eq!(e.offset, 2);
    let e = parse("(1 + 2) 3").unwrap_err();
    assert_eq!(e.offset, 8);
    assert!(parse("").is_err());
}

#[test]
fn evaluation_errors_carry_spans() {
    let zero = [0.0; 4];
    match parse("1 + 1/x1").unwrap().eval(&zero).unwrap_err() {
        EvalError::DivisionByZero(span) => assert_eq!((span.start, span.end), (4, 8)),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        parse("log(x1)").unwrap().eval(&zero),
        Err(EvalError::LogDomain { .. })
    ));
    assert!(matches!(
        parse("sqrt(x1 - 1)").unwrap().eval(&zero),
        Err(EvalError::SqrtDomain { .. })
    ));
    assert!(matches!(
        parse("exp(1000)").unwrap().eval(&zero),
        Err(EvalError::NonFinite(_))
    ));
}

const COMPONENTS: &str = "g12 = \"0\"\ng13 = \"0\"\ng14 = \"0\"\ng22 = \"1\"\ng23 = \"0\"\ng24 = \"0\"\ng33 = \"1\"\ng34 = \"0\"\ng44 = \"1\"\n";

fn config(extra: &str, g11: &str) -> String {
    format!("[[metric]]\nname = \"m\"\ndomain = [-1.0, 1.0]\ng11 = \"{g11}\"\n{COMPONENTS}{extra}")
}

fn config_error(src: &str) -> (usize, usize, String) {
    match parse_config(src, "test.toml").unwrap_err() {
        DslError::Config {
            line,
            col,
            message,
            origin,
        } => {
            assert_eq!(origin, "test.toml");
            (line, col, message)
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn config_errors_point_at_the_source() {
    let (line, col, msg) = config_error(&config("", "1 + * x1"));
    assert_eq!((line, col), (4, 12));
    assert!(msg.starts_with("g11:"), "{msg}");

    let (line, col, msg) = config_error(&config("  colour = \"red\"\n", "1"));
    assert_eq!((line, col), (14, 3));
    assert!(msg.contains("unknown key 'colour'"), "{msg}");

    let src = config("", "1").replace("g33 = \"1\"\n", "");
    let (_, _, msg) = config_error(&src);
    assert!(msg.contains("missing component 'g33'"), "{msg}");

    let src = config("", "1").replace("[-1.0, 1.0]", "[1.0, -1.0]");
    let (line, _, msg) = config_error(&src);
    assert_eq!(line, 3);
    assert!(msg.contains("domain"), "{msg}");

    let (line, _, _) = config_error("[[metric]\nname = 1");
    assert_eq!(line, 1);
    assert!(matches!(
        parse_config("", "empty"),
        Err(DslError::Config { .. })
    ));
}

#[test]
fn indefinite_and_undefined_metrics_are_rejected() {
    let err = load_metric_str(&config("", "x1 - 2"), "t").unwrap_err();
    assert!(matches!(err, DslError::Indefinite { .. }), "{err:?}");
    let err = load_metric_str(&config("", "1/(x1 + 0.5)^2"), "t").unwrap_err();
    assert!(matches!(err, DslError::ProbeEval { .. }), "{err:?}");
}

#[test]
fn line_col_is_one_based() {
    assert_eq!(line_col("ab\ncd", 0), (1, 1));
    assert_eq!(line_col("ab\ncd", 4), (2, 2));
}

#[test]
fn dsl_sphere_matches_built_in() {
    let src = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../metrics/s4.toml"
    ))
    .unwrap();
    let dsl = load_metric_str(&src, "s4.toml").unwrap().remove(0);
    let builtin = metric_by_name("s4").unwrap();
    let mut rng = 0x2545F4914F6CDD1Du64;
    let mut next = || {
        rng ^= rng << 13;
        rng ^= rng >> 7;
        rng ^= rng << 17;
        (rng >> 11) as f64 / (1u64 << 53) as f64 * 1.8 - 0.9
    };
    for _ in 0..100 {
        let p = P4::new(next(), next(), next(), next());
        let d = (dsl.metric(&p) - builtin.metric(&p)).amax();
        assert!(d < 1e-12, "metric differs by {d} at {p:?}");
    }
    let p = P4::new(0.1, -0.3, 0.2, 0.5);
    let a = curvature_operator(&dsl, &p).unwrap().matrix;
    let b = curvature_operator(&builtin, &p).unwrap().matrix;
    assert!((a - b).amax() < 1e-9);
}
