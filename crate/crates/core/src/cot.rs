//! Stage 2: template reasoning traces and multi-trace fine-tuning.
//!
//! Three record kinds are synthesised from an example's facets:
//!
//! * EE (expert explaining): one verdict token per dimension the query
//!   states — type always, then brand, model and attributes when present.
//! * RA (rule adherence): the rule's decision path, product axis, modifier
//!   axis, decision.
//! * DR (decision reflection): only for examples the current model gets
//!   wrong; the wrong decision is part of the input and the trace opens by
//!   naming it before replaying the rule path.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{query_spec, Facets, QuerySpec};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::model::{train, Checkpoint, CotToken, Hyper, InputForm, OutToken, OutputSeq, SeqExample};
use crate::rulejudge::{decide, judge_axes, rule_text, ProductAxis};
use crate::scalar::Scalar;
use crate::schema::{Dataset, Example, Label};
use crate::selection::{predict_labels, TAG_SELECT};

pub const TAG_COT: &str = "IM+select+cot";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CotKind {
    Ee,
    Ra,
    Dr,
}

impl CotKind {
    pub const ALL: [CotKind; 3] = [CotKind::Ee, CotKind::Ra, CotKind::Dr];
}

impl std::str::FromStr for CotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ee" => Ok(CotKind::Ee),
            "ra" => Ok(CotKind::Ra),
            "dr" => Ok(CotKind::Dr),
            other => Err(Error::InvalidArgument(format!("unknown trace kind {other:?}"))),
        }
    }
}

/// Parses a comma-separated kind list such as `ee,ra,dr`.
pub fn parse_kinds(s: &str) -> Result<BTreeSet<CotKind>> {
    let kinds: BTreeSet<CotKind> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if kinds.is_empty() {
        return Err(Error::InvalidArgument("empty trace kind list".into()));
    }
    Ok(kinds)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotRecord {
    pub kind: CotKind,
    /// Id of the source example.
    pub id: String,
    pub query: String,
    pub title: String,
    pub label: Label,
    pub cot_tokens: Vec<OutToken>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrong_decision: Option<Label>,
}

impl CotRecord {
    fn new(kind: CotKind, ex: &Example, cot_tokens: Vec<CotToken>) -> Self {
        CotRecord {
            kind,
            id: ex.id.clone(),
            query: ex.query.clone(),
            title: ex.title.clone(),
            label: ex.label,
            cot_tokens: cot_tokens.into_iter().map(OutToken::Cot).collect(),
            rule: None,
            wrong_decision: None,
        }
    }

    pub fn input_form(&self) -> InputForm {
        match (self.kind, self.wrong_decision) {
            (CotKind::Ee, _) => InputForm::Ee,
            (CotKind::Ra, _) => InputForm::Ra,
            (CotKind::Dr, Some(w)) => InputForm::Dr(w),
            (CotKind::Dr, None) => unreachable!("DR records carry their wrong decision"),
        }
    }

    pub fn check(&self, max_len: usize) -> Result<()> {
        let ok = !self.cot_tokens.is_empty()
            && self.cot_tokens.len() + 2 <= max_len
            && match self.kind {
                CotKind::Ra => self.rule.as_deref() == Some(rule_text()),
                CotKind::Dr => self.wrong_decision.is_some_and(|w| w != self.label),
                CotKind::Ee => true,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "malformed {:?} record for {}",
                self.kind, self.id
            )))
        }
    }

    pub fn to_seq_example<T: Scalar>(&self, c: &Checkpoint<T>) -> Result<SeqExample> {
        Ok(SeqExample {
            input: c.tokenizer.encode(&self.query, &self.title, self.input_form()),
            target: OutputSeq::from_parts(&c.tokenizer, &self.cot_tokens, self.label)?,
        })
    }
}

fn type_token(p: ProductAxis) -> CotToken {
    match p {
        ProductAxis::TypeMatch => CotToken::TypeMatch,
        ProductAxis::FunctionMatch => CotToken::TypeFunction,
        ProductAxis::AccessoryMatch => CotToken::TypeAccessory,
        ProductAxis::Mismatch => CotToken::TypeMismatch,
    }
}

/// Per-dimension verdicts for the dimensions the query states.
pub fn ee_tokens(q: &QuerySpec, p: &Facets) -> Vec<CotToken> {
    let mut v = vec![type_token(judge_axes(q, p).product_axis)];
    if let Some(b) = &q.desired_brand {
        v.push(if *b == p.brand {
            CotToken::BrandMatch
        } else {
            CotToken::BrandMismatch
        });
    }
    if let Some(m) = &q.desired_model {
        v.push(match &p.model {
            Some(have) if have == m => CotToken::ModelMatch,
            Some(_) => CotToken::ModelMismatch,
            None => CotToken::ModelUnknown,
        });
    }
    if !q.desired_attributes.is_empty() {
        let hit = q.desired_attributes.intersection(&p.attributes).count();
        v.push(if hit == q.desired_attributes.len() {
            CotToken::AttrMatch
        } else if hit > 0 {
            CotToken::AttrPartial
        } else {
            CotToken::AttrMismatch
        });
    }
    v
}

/// Product verdict, modifier verdict, decision.
pub fn ra_tokens(q: &QuerySpec, p: &Facets) -> Vec<CotToken> {
    let v = judge_axes(q, p);
    vec![
        CotToken::Product(v.product_axis),
        CotToken::Modifier(v.modifier_axis),
        CotToken::Decide(decide(v)),
    ]
}

pub fn synth_ee(ex: &Example) -> Result<CotRecord> {
    Ok(CotRecord::new(CotKind::Ee, ex, ee_tokens(&query_spec(ex)?, &ex.facets)))
}

pub fn synth_ra(ex: &Example) -> Result<CotRecord> {
    let mut r = CotRecord::new(CotKind::Ra, ex, ra_tokens(&query_spec(ex)?, &ex.facets));
    r.rule = Some(rule_text().to_string());
    Ok(r)
}

/// DR record from an already computed prediction; `None` when the
/// prediction is right or could not be parsed.
pub fn synth_dr_from_prediction(ex: &Example, pred: Option<Label>) -> Result<Option<CotRecord>> {
    let wrong = match pred {
        Some(p) if p != ex.label => p,
        _ => return Ok(None),
    };
    let mut tokens = vec![CotToken::WrongWas(wrong)];
    tokens.extend(ra_tokens(&query_spec(ex)?, &ex.facets));
    let mut r = CotRecord::new(CotKind::Dr, ex, tokens);
    r.wrong_decision = Some(wrong);
    Ok(Some(r))
}

pub fn synth_dr<T: Scalar>(ex: &Example, model: &Checkpoint<T>) -> Result<Option<CotRecord>> {
    let form = InputForm::for_stage(&model.stage_tag);
    let pred = match model.predict(&model.tokenizer.encode(&ex.query, &ex.title, form)) {
        Ok(l) => Some(l),
        Err(Error::MalformedOutput) => None,
        Err(e) => return Err(e),
    };
    synth_dr_from_prediction(ex, pred)
}

/// EE and RA records for every example of `d`, plus a DR record for each
/// example `model` gets wrong; grouped by example in `d`'s order.
pub fn assemble_cot_training<T: Scalar>(d: &Dataset, model: &Checkpoint<T>) -> Result<Vec<CotRecord>> {
    let preds = predict_labels(model, d)?;
    let mut out = Vec::with_capacity(d.len() * 2);
    for (ex, pred) in d.iter().zip(preds) {
        out.push(synth_ee(ex)?);
        out.push(synth_ra(ex)?);
        if let Some(r) = synth_dr_from_prediction(ex, pred)? {
            out.push(r);
        }
    }
    Ok(out)
}

/// Fine-tunes the selection-stage model on the records whose kind is in
/// `mask`.
pub fn train_cot<T: Scalar>(
    start: &Checkpoint<T>,
    records: &[CotRecord],
    mask: &BTreeSet<CotKind>,
    hyper: &Hyper,
) -> Result<Checkpoint<T>> {
    if start.stage_tag != TAG_SELECT {
        return Err(Error::StageMismatch {
            expected: TAG_SELECT.into(),
            found: start.stage_tag.clone(),
        });
    }
    let data: Vec<SeqExample> = records
        .iter()
        .filter(|r| mask.contains(&r.kind))
        .map(|r| r.to_seq_example(start))
        .collect::<Result<_>>()?;
    Ok(train(start, &data, hyper, TAG_COT)?.checkpoint)
}

/// One record per line after a `# cot_records` header carrying `provenance`.
pub fn write_cot_records(records: &[CotRecord], provenance: &str, path: impl AsRef<Path>) -> Result<()> {
    jsonl::write(
        path.as_ref(),
        Some(format!("cot_records {provenance}").trim_end()),
        records,
    )
}

pub fn read_cot_records(path: impl AsRef<Path>) -> Result<Vec<CotRecord>> {
    Ok(jsonl::read(path.as_ref())?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{clean_label, gen_catalog, gen_examples, TierMix};
    use crate::model::{is_well_formed, Tokenizer};
    use crate::rulejudge::ModifierAxis;
    use crate::schema::Tier;

    fn ex(query: &str, facets: Facets, label: Label) -> Example {
        Example {
            id: "x".into(),
            query: query.into(),
            title: facets.title(),
            label,
            facets,
            tier: Tier::Top,
            noisy: false,
        }
    }

    fn iphone_charger() -> Example {
        let mut p = Facets::simple("apple", "charger", "mobile");
        p.accessory_of = Some("iphone".into());
        ex("iphone", p, Label::Trivial)
    }

    fn s24_for_iphone() -> Example {
        let mut p = Facets::simple("samsung", "phone", "mobile");
        p.model = Some("s24".into());
        ex("iphone 15", p, Label::Trivial)
    }

    #[test]
    fn ee_for_the_charger_pair() {
        let r = synth_ee(&iphone_charger()).unwrap();
        assert!(r.cot_tokens.contains(&OutToken::Cot(CotToken::TypeAccessory)));
        assert!(r.cot_tokens.contains(&OutToken::Cot(CotToken::BrandMatch)));
        assert_eq!(r.label, Label::Trivial);
        assert_eq!(synth_ee(&iphone_charger()).unwrap(), r);
    }

    #[test]
    fn ee_without_modifiers_is_one_token() {
        let r = synth_ee(&ex(
            "kettle",
            Facets::simple("midea", "kettle", "kitchen"),
            Label::Significant,
        ))
        .unwrap();
        assert_eq!(r.cot_tokens, vec![OutToken::Cot(CotToken::TypeMatch)]);
    }

    #[test]
    fn ra_traces_the_rule() {
        let r = synth_ra(&s24_for_iphone()).unwrap();
        assert_eq!(
            r.cot_tokens[..2],
            [
                OutToken::Cot(CotToken::Product(ProductAxis::FunctionMatch)),
                OutToken::Cot(CotToken::Modifier(ModifierAxis::Mismatch))
            ]
        );
        assert_eq!(r.cot_tokens[2], OutToken::Cot(CotToken::Decide(Label::Trivial)));
        assert_eq!(r.rule.as_deref(), Some(rule_text()));
        r.check(6).unwrap();
    }

    #[test]
    fn ra_decision_matches_clean_labels_on_a_full_scan() {
        let c = gen_catalog(300, 4).unwrap();
        let d = gen_examples(&c, 3000, &TierMix::default(), 0.0, 8).unwrap();
        for e in d.iter() {
            let r = synth_ra(e).unwrap();
            assert_eq!(
                r.cot_tokens[2],
                OutToken::Cot(CotToken::Decide(clean_label(e).unwrap()))
            );
            let ee = synth_ee(e).unwrap();
            ee.check(6).unwrap();
        }
    }

    #[test]
    fn dr_only_for_errors() {
        let e = ex("phone", Facets::simple("acme", "phone", "mobile"), Label::Marginal);
        assert_eq!(synth_dr_from_prediction(&e, Some(Label::Marginal)).unwrap(), None);
        assert_eq!(synth_dr_from_prediction(&e, None).unwrap(), None);
        let r = synth_dr_from_prediction(&e, Some(Label::Significant)).unwrap().unwrap();
        assert_eq!(r.wrong_decision, Some(Label::Significant));
        assert_eq!(r.cot_tokens[0], OutToken::Cot(CotToken::WrongWas(Label::Significant)));
        assert_eq!(r.cot_tokens.len(), 4);
        r.check(6).unwrap();
    }

    #[test]
    fn pair_count_is_two_per_example_plus_errors() {
        let c = gen_catalog(200, 4).unwrap();
        let d = gen_examples(&c, 300, &TierMix::default(), 0.1, 9).unwrap();
        let m = Checkpoint::<f64>::init(Tokenizer::standard(), 8, 8, 6, 3)
            .unwrap()
            .with_stage(TAG_SELECT);
        let preds = predict_labels(&m, &d).unwrap();
        let errors = d
            .iter()
            .zip(&preds)
            .filter(|(e, p)| p.is_some_and(|p| p != e.label))
            .count();
        let recs = assemble_cot_training(&d, &m).unwrap();
        assert_eq!(recs.len(), 2 * d.len() + errors);
        let tok = &m.tokenizer;
        for r in &recs {
            let s = r.to_seq_example(&m).unwrap();
            assert!(is_well_formed(s.target.tokens(), tok, 6));
        }
    }

    #[test]
    fn role_markers_separate_the_kinds() {
        let m = Checkpoint::<f64>::zeros(Tokenizer::standard(), 2, 2, 6).unwrap();
        let e = iphone_charger();
        let a = synth_ee(&e).unwrap().to_seq_example(&m).unwrap().input;
        let b = synth_ra(&e).unwrap().to_seq_example(&m).unwrap().input;
        let c = synth_dr_from_prediction(&e, Some(Label::Exact))
            .unwrap()
            .unwrap()
            .to_seq_example(&m)
            .unwrap()
            .input;
        assert!(a != b && b != c && a != c);
    }

    #[test]
    fn train_cot_requires_the_selection_stage_and_honours_the_mask() {
        let m = Checkpoint::<f64>::init(Tokenizer::standard(), 4, 4, 6, 0).unwrap();
        let recs = vec![
            synth_ee(&iphone_charger()).unwrap(),
            synth_ra(&iphone_charger()).unwrap(),
        ];
        let mask: BTreeSet<_> = [CotKind::Ee].into();
        let h = Hyper {
            epochs: 1,
            ..Hyper::default()
        };
        assert!(matches!(
            train_cot(&m, &recs, &mask, &h),
            Err(Error::StageMismatch { .. })
        ));
        let m = m.with_stage(TAG_SELECT);
        let out = train_cot(&m, &recs, &mask, &h).unwrap();
        assert_eq!(out.stage_tag, TAG_COT);
        // one EE record, batch of one: a single step on exactly that pair
        let g = m.grad_lm(&[recs[0].to_seq_example(&m).unwrap()]).unwrap();
        let expect: Vec<f64> = m.params.iter().zip(&g).map(|(p, g)| p - 0.1 * g).collect();
        assert_eq!(out.params, expect);
    }

    #[test]
    fn kinds_parse() {
        assert_eq!(parse_kinds("ee,ra,dr").unwrap().len(), 3);
        assert_eq!(parse_kinds("EE").unwrap(), [CotKind::Ee].into());
        assert!(parse_kinds("ee,xx").is_err());
        assert!(parse_kinds("").is_err());
    }

    #[test]
    fn records_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cot.jsonl");
        let e = iphone_charger();
        let recs = vec![
            synth_ee(&e).unwrap(),
            synth_ra(&e).unwrap(),
            synth_dr_from_prediction(&e, Some(Label::Exact)).unwrap().unwrap(),
        ];
        write_cot_records(&recs, "", &p).unwrap();
        assert_eq!(read_cot_records(&p).unwrap(), recs);
    }
}
