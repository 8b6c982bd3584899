//! Line protocol for interactive dialogs on stdin.
//!
//! While a question is pending, a line holds the answer plus optional
//! `Attribute=value` tokens the user volunteers alongside it. `?` means the
//! user does not know; `value@0.4` attaches a confidence. While a
//! confirmation is pending, the line is `y`/`yes` or `n`/`no`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use anyhow::{anyhow, bail, Context, Result};
use dtdialog::dialog::{Answer, DialogEngine, PromptKind, Step};
use dtdialog::{AttributeValue, Schema, Session};

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAnswer {
    pub answer: Answer<f64>,
    pub extras: BTreeMap<String, AttributeValue>,
}

/// Parses `k=v` pairs separated by commas or whitespace.
pub fn parse_assignments(schema: &Schema, text: &str) -> Result<BTreeMap<String, AttributeValue>> {
    let mut out = BTreeMap::new();
    for token in text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
    {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| anyhow!("expected attribute=value, got `{token}`"))?;
        out.insert(k.to_string(), parse_for(schema, k, v)?);
    }
    Ok(out)
}

fn parse_for(schema: &Schema, attribute: &str, text: &str) -> Result<AttributeValue> {
    let (_, a) = schema.lookup(attribute)?;
    a.parse_value(text)
        .map_err(|e| anyhow!("{attribute}: {e}"))
}

pub fn parse_answer(schema: &Schema, attribute: &str, line: &str) -> Result<ParsedAnswer> {
    let mut main = Vec::new();
    let mut extras = Vec::new();
    for token in line.split_whitespace() {
        if token.contains('=') {
            extras.push(token);
        } else {
            main.push(token);
        }
    }
    let extras = parse_assignments(schema, &extras.join(" "))?;
    let text = main.join(" ");
    if text.is_empty() {
        bail!("empty answer for {attribute}");
    }
    let (value_text, confidence) = match text.rsplit_once('@') {
        Some((v, c)) => {
            let c: f64 = c
                .trim()
                .parse()
                .with_context(|| format!("bad confidence `{c}`"))?;
            (v.trim().to_string(), c)
        }
        None => (text, 1.0),
    };
    let value = parse_for(schema, attribute, &value_text)?;
    let answer = if value.is_missing() {
        Answer::Unknown
    } else {
        Answer::Known { value, confidence }
    };
    Ok(ParsedAnswer { answer, extras })
}

pub fn parse_confirmation(line: &str) -> Result<bool> {
    match line.trim().to_ascii_lowercase().as_str() {
        "y" | "yes" => Ok(true),
        "n" | "no" => Ok(false),
        other => bail!("expected y or n, got `{other}`"),
    }
}

/// Drives `session` to a decision, prompting on `out` and reading `input`.
pub fn run_dialog(
    engine: &DialogEngine<'_, f64>,
    session: &mut Session,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<()> {
    let schema = engine.tree().schema().clone();
    loop {
        if session.is_classified() {
            return Ok(());
        }
        let prompt = match engine.next_question(session)? {
            Step::Classified(_) => return Ok(()),
            Step::Question(p) => p,
        };
        match prompt.kind {
            PromptKind::Ask => writeln!(out, "Q [{}]: {}", prompt.attribute, prompt.text)?,
            PromptKind::Confirm => writeln!(out, "C [{}]: {} (y/n)", prompt.attribute, prompt.text)?,
        }
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            bail!("input ended before the dialog reached a decision");
        }
        match prompt.kind {
            PromptKind::Ask => {
                let p = parse_answer(&schema, &prompt.attribute, &line)?;
                engine.submit_answer(session, &prompt.attribute, p.answer, p.extras)?;
            }
            PromptKind::Confirm => {
                engine.submit_confirmation(session, parse_confirmation(&line)?)?;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dtdialog::evaluation::credit_schema;

    #[test]
    fn answer_tokens() {
        let s = credit_schema();
        let p = parse_answer(&s, "Savings", "15000").unwrap();
        assert_eq!(p.answer, Answer::certain(AttributeValue::Number(15000.0)));
        assert!(p.extras.is_empty());

        let p = parse_answer(&s, "Employment", "? Bankruptcy=no").unwrap();
        assert_eq!(p.answer, Answer::Unknown);
        assert_eq!(p.extras["Bankruptcy"], AttributeValue::category("no"));

        let p = parse_answer(&s, "Employment", "yes@0.3").unwrap();
        assert_eq!(
            p.answer,
            Answer::Known {
                value: AttributeValue::category("yes"),
                confidence: 0.3
            }
        );
        assert!(parse_answer(&s, "Employment", "maybe").is_err());
        assert!(parse_answer(&s, "Employment", "  ").is_err());
        assert!(parse_answer(&s, "Savings", "x=1").is_err());
    }

    #[test]
    fn confirmations() {
        assert!(parse_confirmation("Y\n").unwrap());
        assert!(!parse_confirmation("no").unwrap());
        assert!(parse_confirmation("sure").is_err());
    }
}
