use std::collections::{BTreeSet, HashMap};

use crate::corpus::{Lexicon, ACCESSORY_CONNECTIVE};
use crate::error::{Error, Result};
use crate::schema::Label;

use super::vocab::OutToken;

pub const UNK: &str = "<unk>";
const EE_MARKER: &str = "<ee>";
const RA_MARKER: &str = "<ra>";
const DR_MARKER: &str = "<dr>";
/// Stands in for the full rule text inside RA inputs.
const RULE_REF: &str = "<rule>";

fn was_token(l: Label) -> String {
    format!("<was:{}>", l.as_str().to_lowercase())
}

fn specials() -> Vec<String> {
    let mut v: Vec<String> = [UNK, EE_MARKER, RA_MARKER, RULE_REF, DR_MARKER]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.extend(Label::ALL.map(was_token));
    v
}

/// How a (query, title) pair is laid out as model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputForm {
    /// query and title tokens only; used for plain fine-tuning
    Plain,
    /// expert-explaining role marker
    Ee,
    /// rule-adherence role marker plus the rule reference
    Ra,
    /// decision-reflection role marker plus the recorded wrong decision
    Dr(Label),
}

impl InputForm {
    /// Inference form for a checkpoint: models that went through reasoning
    /// tuning are queried in the EE form, earlier stages in the plain form.
    pub fn for_stage(stage_tag: &str) -> InputForm {
        if stage_tag.contains("cot") || stage_tag == "final" {
            InputForm::Ee
        } else {
            InputForm::Plain
        }
    }
}

/// Input vocabulary plus output vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    output: Vec<OutToken>,
}

impl Tokenizer {
    /// Lowercases and splits on anything that is not alphanumeric.
    pub fn split(text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect()
    }

    /// Special tokens first, then the distinct tokens of `texts` in sorted
    /// order; the standard output vocabulary.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Tokenizer {
        let words: BTreeSet<String> = texts.into_iter().flat_map(Self::split).collect();
        let mut vocab = specials();
        let fresh: Vec<String> = words.into_iter().filter(|w| !vocab.contains(w)).collect();
        vocab.extend(fresh);
        Self::from_parts(vocab, OutToken::standard()).expect("standard vocabularies are valid")
    }

    /// Tokenizer over every word the synthetic lexicon can emit.
    pub fn standard() -> Tokenizer {
        let lex = Lexicon::standard();
        let words: Vec<&str> = lex
            .catalog_types()
            .map(|t| t.name)
            .chain(lex.product_type("iphone").map(|t| t.name))
            .chain(lex.product_type("galaxy").map(|t| t.name))
            .chain(lex.brands().iter().copied())
            .chain(lex.attributes().iter().copied())
            .chain(lex.models().iter().copied())
            .chain([ACCESSORY_CONNECTIVE])
            .collect();
        Self::build(words)
    }

    pub fn from_parts(vocab: Vec<String>, output: Vec<OutToken>) -> Result<Tokenizer> {
        if vocab.first().map(String::as_str) != Some(UNK) {
            return Err(Error::InvalidArgument("input vocabulary must start with <unk>".into()));
        }
        if output.len() < 6 || output[..6] != OutToken::minimal()[..] {
            return Err(Error::InvalidArgument(
                "output vocabulary must start with <eos> and the five labels".into(),
            ));
        }
        let index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != vocab.len() {
            return Err(Error::InvalidArgument("duplicate input token".into()));
        }
        if output.iter().collect::<std::collections::HashSet<_>>().len() != output.len() {
            return Err(Error::InvalidArgument("duplicate output token".into()));
        }
        Ok(Tokenizer { vocab, index, output })
    }

    pub fn with_output(self, output: Vec<OutToken>) -> Result<Tokenizer> {
        Self::from_parts(self.vocab, output)
    }

    pub fn input_vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn output_vocab(&self) -> &[OutToken] {
        &self.output
    }

    pub fn input_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn output_len(&self) -> usize {
        self.output.len()
    }

    pub fn unk(&self) -> usize {
        0
    }

    pub fn token_id(&self, tok: &str) -> usize {
        self.index.get(tok).copied().unwrap_or(0)
    }

    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        Self::split(text).iter().map(|t| self.token_id(t)).collect()
    }

    /// Query tokens, title tokens, then the form's markers.
    pub fn encode(&self, query: &str, title: &str, form: InputForm) -> Vec<usize> {
        let mut ids = self.encode_text(query);
        ids.extend(self.encode_text(title));
        match form {
            InputForm::Plain => {}
            InputForm::Ee => ids.push(self.token_id(EE_MARKER)),
            InputForm::Ra => {
                ids.push(self.token_id(RA_MARKER));
                ids.push(self.token_id(RULE_REF));
            }
            InputForm::Dr(wrong) => {
                ids.push(self.token_id(DR_MARKER));
                ids.push(self.token_id(&was_token(wrong)));
            }
        }
        ids
    }

    pub fn eos(&self) -> usize {
        0
    }

    /// Output index of a label token.
    pub fn label_token(&self, l: Label) -> usize {
        1 + Label::ALL.iter().position(|x| *x == l).unwrap()
    }

    pub fn token_label(&self, idx: usize) -> Option<Label> {
        match self.output.get(idx) {
            Some(OutToken::Label(l)) => Some(*l),
            _ => None,
        }
    }

    pub fn out_index(&self, t: OutToken) -> Option<usize> {
        self.output.iter().position(|x| *x == t)
    }

    pub fn out_token(&self, idx: usize) -> Option<OutToken> {
        self.output.get(idx).copied()
    }
}
