use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{AttributeSchema, AttributeValue, Dataset, Example, Schema};

pub const GRANT: &str = "yes";
pub const DENY: &str = "no";

const YES_NO: &[&str] = &["yes", "no"];

/// Schema of the synthetic credit screening data: 26 attributes, the first four
/// matching the small worked example (Employment, Years, Savings, Bankruptcy).
pub fn credit_schema() -> Schema {
    use AttributeSchema as A;
    let attrs = vec![
        A::categorical("Employment", YES_NO, "Are you employed?"),
        A::numeric(
            "Years",
            Some("years"),
            "How many years have you lived at your current address?",
        ),
        A::numeric("Savings", Some("dollars"), "How much do you have in savings?"),
        A::categorical("Bankruptcy", YES_NO, "Did you ever declare bankruptcy?"),
        A::numeric("Salary", Some("dollars"), "What is your current yearly salary?"),
        A::categorical("SavingsAccount", YES_NO, "Do you have a savings account?"),
        A::numeric("Age", Some("years"), "How old are you?"),
        A::categorical("DefaultedLoan", YES_NO, "Have you ever defaulted on a loan?"),
        A::numeric("CreditCards", None, "How many other credit cards do you have?"),
        A::categorical("HomeOwner", YES_NO, "Do you own your home?"),
        A::categorical("Married", YES_NO, "Are you married?"),
        A::numeric("Dependents", None, "How many dependents do you support?"),
        A::numeric("MonthlyDebt", Some("dollars"), "How much do you pay on debts each month?"),
        A::categorical("CheckingAccount", YES_NO, "Do you have a checking account?"),
        A::numeric("YearsEmployed", Some("years"), "How long have you held your current job?"),
        A::categorical(
            "Education",
            &["primary", "secondary", "university"],
            "What is your highest level of education?",
        ),
        A::categorical("CarLoan", YES_NO, "Do you have a car loan?"),
        A::categorical("StudentLoan", YES_NO, "Do you have a student loan?"),
        A::categorical("Mortgage", YES_NO, "Do you have a mortgage?"),
        A::numeric("LatePayments", None, "How many payments were you late on last year?"),
        A::numeric("CreditHistoryYears", Some("years"), "How many years of credit history do you have?"),
        A::categorical("Citizen", YES_NO, "Are you a citizen?"),
        A::categorical("PhoneListed", YES_NO, "Is your phone number listed?"),
        A::categorical("Guarantor", YES_NO, "Can someone guarantee the loan?"),
        A::numeric("RentAmount", Some("dollars"), "How much rent do you pay each month?"),
        A::categorical(
            "Region",
            &["north", "south", "east", "west"],
            "Which region do you live in?",
        ),
    ];
    Schema::new(attrs).expect("credit schema is valid")
}

/// The hidden ground truth:
///
/// * bankrupt applicants are granted only with savings above 50 000;
/// * employed applicants need savings of at least 1 000 or a salary of at least 30 000;
/// * everyone else needs savings of at least 10 000.
pub fn credit_rule(employed: bool, savings: f64, bankrupt: bool, salary: f64) -> bool {
    if bankrupt {
        savings > 50_000.0
    } else if employed {
        savings >= 1_000.0 || salary >= 30_000.0
    } else {
        savings >= 10_000.0
    }
}

fn yes_no(b: bool) -> AttributeValue {
    AttributeValue::category(if b { "yes" } else { "no" })
}

fn num(x: f64) -> AttributeValue {
    AttributeValue::Number(x)
}

/// Everything except the four leading columns. Returns (values, salary).
fn background<R: Rng>(rng: &mut R, employed: bool) -> (Vec<AttributeValue>, f64) {
    // unemployed applicants may still report benefits or other income
    let salary = if employed {
        (rng.random_range(15_000.0..120_000.0f64) / 100.0).round() * 100.0
    } else {
        (rng.random_range(0.0..40_000.0f64) / 100.0).round() * 100.0
    };
    let age = rng.random_range(18..75) as f64;
    let regions = ["north", "south", "east", "west"];
    let education = ["primary", "secondary", "university"];
    let v = vec![
        num(salary),
        yes_no(rng.random_bool(0.8)),
        num(age),
        yes_no(rng.random_bool(0.1)),
        num(rng.random_range(0..6) as f64),
        yes_no(rng.random_bool(0.5)),
        yes_no(rng.random_bool(0.5)),
        num(rng.random_range(0..5) as f64),
        num(rng.random_range(0..40) as f64 * 50.0),
        yes_no(rng.random_bool(0.85)),
        num(if employed { rng.random_range(0..25) as f64 } else { 0.0 }),
        pick(rng, &education),
        yes_no(rng.random_bool(0.3)),
        yes_no(rng.random_bool(0.2)),
        yes_no(rng.random_bool(0.35)),
        num(rng.random_range(0..6) as f64),
        num(rng.random_range(0..30) as f64),
        yes_no(rng.random_bool(0.9)),
        yes_no(rng.random_bool(0.6)),
        yes_no(rng.random_bool(0.25)),
        num(rng.random_range(0..30) as f64 * 50.0),
        pick(rng, &regions),
    ];
    (v, salary)
}

fn pick<R: Rng>(rng: &mut R, options: &[&str]) -> AttributeValue {
    AttributeValue::category(options[rng.random_range(0..options.len())])
}

/// The three worked-example applicants, with background columns drawn from a
/// fixed stream so they do not depend on the caller's seed.
fn worked_rows() -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let rows = [
        (false, Some(10.0), 100_000.0, true, GRANT),
        (false, None, 5_000.0, true, DENY),
        (true, Some(1.0), 2_000.0, false, GRANT),
    ];
    rows.iter()
        .map(|&(employed, years, savings, bankrupt, label)| {
            let (rest, salary) = background(&mut rng, employed);
            debug_assert_eq!(credit_rule(employed, savings, bankrupt, salary), label == GRANT);
            let mut values = vec![
                yes_no(employed),
                years.map_or(AttributeValue::Missing, num),
                num(savings),
                yes_no(bankrupt),
            ];
            values.extend(rest);
            Example {
                values,
                label: label.to_string(),
            }
        })
        .collect()
}

/// Noise-free synthetic credit data. See [`credit_rule`] for the labels.
pub fn generate_credit_dataset(n: usize, seed: u64) -> Dataset {
    generate_credit_dataset_noisy(n, seed, 0.0)
}

/// Like [`generate_credit_dataset`], flipping each generated label with
/// probability `label_noise`. The first three rows are the worked example and
/// are never flipped.
pub fn generate_credit_dataset_noisy(n: usize, seed: u64, label_noise: f64) -> Dataset {
    assert!(n >= 1, "n must be positive");
    assert!((0.0..=1.0).contains(&label_noise), "label noise outside [0, 1]");
    let mut examples = worked_rows();
    examples.truncate(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while examples.len() < n {
        let employed = rng.random_bool(0.7);
        let years = rng.random_range(0..30) as f64;
        let savings = (500.0 * 400f64.powf(rng.random::<f64>())).round();
        let bankrupt = rng.random_bool(0.15);
        let (rest, salary) = background(&mut rng, employed);
        let mut grant = credit_rule(employed, savings, bankrupt, salary);
        // always drawn, so the noise level does not shift the feature stream
        if rng.random::<f64>() < label_noise {
            grant = !grant;
        }
        let mut values = vec![yes_no(employed), num(years), num(savings), yes_no(bankrupt)];
        values.extend(rest);
        examples.push(Example {
            values,
            label: (if grant { GRANT } else { DENY }).to_string(),
        });
    }
    Dataset::new(
        credit_schema(),
        vec![GRANT.to_string(), DENY.to_string()],
        examples,
    )
    .expect("generated rows match the schema")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows_are_the_worked_example() {
        for seed in [0, 1, 99] {
            let ds = generate_credit_dataset(3, seed);
            let head: Vec<_> = ds
                .examples()
                .iter()
                .map(|e| (e.values[..4].to_vec(), e.label.clone()))
                .collect();
            use AttributeValue::*;
            assert_eq!(
                head,
                vec![
                    (vec![Category("no".into()), Number(10.0), Number(100_000.0), Category("yes".into())], "yes".into()),
                    (vec![Category("no".into()), Missing, Number(5_000.0), Category("yes".into())], "no".into()),
                    (vec![Category("yes".into()), Number(1.0), Number(2_000.0), Category("no".into())], "yes".into()),
                ]
            );
            assert_eq!(ds, generate_credit_dataset(3, 7));
        }
    }

    #[test]
    fn deterministic_and_wide() {
        let a = generate_credit_dataset(200, 5);
        assert_eq!(a, generate_credit_dataset(200, 5));
        assert_ne!(a, generate_credit_dataset(200, 6));
        assert_eq!(a.schema().len(), 26);
        for name in [
            "Years", "Salary", "SavingsAccount", "Age", "DefaultedLoan", "CreditCards", "Bankruptcy",
        ] {
            assert!(a.schema().position(name).is_some(), "{name}");
        }
    }

    #[test]
    fn class_balance() {
        let ds = generate_credit_dataset(1000, 42);
        let grants = ds.examples().iter().filter(|e| e.label == GRANT).count() as f64;
        let share = grants / 1000.0;
        assert!((0.2..=0.8).contains(&share), "{share}");
    }

    #[test]
    fn labels_follow_rule_without_noise() {
        let ds = generate_credit_dataset(300, 3);
        for e in ds.examples() {
            let employed = e.values[0] == AttributeValue::category("yes");
            let bankrupt = e.values[3] == AttributeValue::category("yes");
            let grant = credit_rule(
                employed,
                e.values[2].as_number().unwrap(),
                bankrupt,
                e.values[4].as_number().unwrap(),
            );
            assert_eq!(grant, e.label == GRANT);
        }
    }

    #[test]
    fn noise_flips_some_labels() {
        let clean = generate_credit_dataset(500, 3);
        let noisy = generate_credit_dataset_noisy(500, 3, 0.2);
        let diff = clean
            .examples()
            .iter()
            .zip(noisy.examples())
            .filter(|(a, b)| a.label != b.label)
            .count();
        assert!(diff > 20 && diff < 200, "{diff}");
    }
}
