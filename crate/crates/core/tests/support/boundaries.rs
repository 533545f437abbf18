//! Threshold-boundary cases for the quality function at the default
//! thresholds (a 1.2, b 0.7, c 0.7, d1 0.6, d2 2.0).

use rewritekit::quality::{FailedRule, Measurements, TaskKind};

pub struct Case {
    pub label: &'static str,
    pub m: Measurements,
    pub task: TaskKind,
    pub score: u8,
    pub rule: Option<FailedRule>,
}

fn below(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}

fn above(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

const PASSING: Measurements = Measurements {
    edit_ratio: 1.5,
    nli_fwd: 0.9,
    nli_rev: 0.9,
    len_ratio: 1.0,
};

fn case(
    label: &'static str,
    task: TaskKind,
    edit: impl FnOnce(&mut Measurements),
    rule: Option<FailedRule>,
) -> Case {
    let mut m = PASSING;
    if task == TaskKind::Shorten {
        m.len_ratio = 0.5;
    } else if task == TaskKind::Elaborate {
        m.len_ratio = 2.5;
    }
    edit(&mut m);
    Case {
        label,
        m,
        task,
        score: u8::from(rule.is_none()),
        rule,
    }
}

pub fn cases() -> Vec<Case> {
    use FailedRule::*;
    use TaskKind::*;
    vec![
        case("edit ratio at a", Generic, |m| m.edit_ratio = 1.2, None),
        case(
            "edit ratio one ulp below a",
            Generic,
            |m| m.edit_ratio = below(1.2),
            Some(EditRatio),
        ),
        case(
            "edit ratio one ulp above a",
            Generic,
            |m| m.edit_ratio = above(1.2),
            None,
        ),
        case(
            "edit ratio 1.19",
            Generic,
            |m| m.edit_ratio = 1.19,
            Some(EditRatio),
        ),
        case("nli fwd at b", Generic, |m| m.nli_fwd = 0.7, None),
        case(
            "nli fwd one ulp below b",
            Generic,
            |m| m.nli_fwd = below(0.7),
            Some(NliFwd),
        ),
        case("nli fwd 0.69", Generic, |m| m.nli_fwd = 0.69, Some(NliFwd)),
        case("nli fwd 0.71", Generic, |m| m.nli_fwd = 0.71, None),
        case("nli rev at c", Generic, |m| m.nli_rev = 0.7, None),
        case(
            "nli rev one ulp below c",
            Generic,
            |m| m.nli_rev = below(0.7),
            Some(NliRev),
        ),
        case("nli rev 0.69", Generic, |m| m.nli_rev = 0.69, Some(NliRev)),
        case("nli rev 0.71", Generic, |m| m.nli_rev = 0.71, None),
        case("shorten len at d1", Shorten, |m| m.len_ratio = 0.6, None),
        case(
            "shorten len one ulp above d1",
            Shorten,
            |m| m.len_ratio = above(0.6),
            Some(ShortenLen),
        ),
        case(
            "shorten len 0.61",
            Shorten,
            |m| m.len_ratio = 0.61,
            Some(ShortenLen),
        ),
        case("shorten len 0.59", Shorten, |m| m.len_ratio = 0.59, None),
        case(
            "elaborate len at d2",
            Elaborate,
            |m| m.len_ratio = 2.0,
            None,
        ),
        case(
            "elaborate len one ulp below d2",
            Elaborate,
            |m| m.len_ratio = below(2.0),
            Some(ElaborateLen),
        ),
        case(
            "elaborate len 1.99",
            Elaborate,
            |m| m.len_ratio = 1.99,
            Some(ElaborateLen),
        ),
        case(
            "elaborate len 2.01",
            Elaborate,
            |m| m.len_ratio = 2.01,
            None,
        ),
    ]
}
