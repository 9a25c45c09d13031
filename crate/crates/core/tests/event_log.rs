//! Replay and purge properties over randomly generated service histories.

use std::io::Cursor;

use floodsense_core::aggregation::{aggregate_region, aggregate_region_traced, to_json};
use floodsense_core::ledger::{Ledger, LedgerContext, StoredReport, WindowKey};
use floodsense_core::store::{
    purge_rewrite, render_log, replay, write_log, Event, EventRecord, LogHeader, Store,
};
use floodsense_core::trust::{run_detection, DetectionConfig, Verdict};
use floodsense_core::{
    AnswerValue, Attachment, MediaKind, PeriodConfig, QuestionnaireSchema, Report, UserProfile,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PERIODS: u64 = 3;

fn context() -> LedgerContext {
    LedgerContext {
        schema: QuestionnaireSchema::default_flood(),
        grid: "10,12,20,22,2,2".parse().unwrap(),
        period: PeriodConfig::new(3600, 0).unwrap(),
    }
}

fn make_report(
    rng: &mut ChaCha8Rng,
    ctx: &LedgerContext,
    id: String,
    user: &str,
    deviant: bool,
    region: usize,
    period: u64,
) -> Report {
    let (lat, lon) = ctx.grid.cell_center(region).unwrap();
    let answers = ctx
        .schema
        .questions()
        .iter()
        .map(|q| {
            if !q.is_scored() {
                if rng.random_bool(0.3) {
                    AnswerValue::FreeText(format!("note from {user}"))
                } else {
                    AnswerValue::Skipped
                }
            } else if rng.random_bool(0.05) {
                AnswerValue::Skipped
            } else if deviant {
                AnswerValue::Chosen(q.option_count)
            } else {
                let truth = q.option_count.div_ceil(2);
                let jitter = if q.option_count > 2 {
                    rng.random_range(0..=1)
                } else {
                    0
                };
                AnswerValue::Chosen((truth + jitter).min(q.option_count))
            }
        })
        .collect();
    let attachments = if rng.random_bool(0.2) {
        vec![Attachment {
            question_id: 9,
            media_kind: MediaKind::Photo,
            byte_length: rng.random_range(1..10_000),
            blob_ref: format!("blob-{id}"),
        }]
    } else {
        Vec::new()
    };
    Report {
        report_id: id,
        user_id: user.to_owned(),
        latitude: lat,
        longitude: lon,
        timestamp: period as i64 * 3600 + rng.random_range(0..3600),
        answers,
        attachments,
    }
}

/// Evaluates every pending window of `period` and below, blacklisting
/// whoever is flagged. Mirrors what the service does on its timer.
fn detect_through(store: &mut Store, period: u64, ts: i64) {
    let keys: Vec<WindowKey> = store
        .ledger()
        .pending_windows()
        .into_iter()
        .filter(|k| k.period <= period)
        .collect();
    for key in keys {
        let window = run_detection(
            store.ledger().build_window(key).unwrap(),
            &DetectionConfig::default(),
        );
        let flagged: Vec<String> = window.malicious_users().map(str::to_owned).collect();
        store.append(Event::DetectionRun(window), ts).unwrap();
        for user_id in flagged {
            store
                .append(
                    Event::UserBlacklisted {
                        user_id,
                        region: key.region,
                        period: key.period,
                    },
                    ts,
                )
                .unwrap();
        }
    }
}

/// A random history: users register, submit in every period (sometimes
/// late, sometimes twice), and windows are evaluated period by period.
fn history(seed: u64) -> Store {
    let ctx = context();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = Store::in_memory(ctx.clone());
    let users = rng.random_range(4..=16);
    let deviants = rng.random_range(0..=2);
    let mut ts = 0;
    for u in 0..users {
        let profile = UserProfile::new(format!("u{u:02}"), format!("id-{u}"));
        store.append(Event::UserRegistered(profile), ts).unwrap();
    }
    let mut next_report = 0;
    for period in 0..PERIODS {
        for u in 0..users {
            let user = format!("u{u:02}");
            let region = if rng.random_bool(0.8) {
                0
            } else {
                rng.random_range(0..4)
            };
            for _ in 0..rng.random_range(1..=2) {
                ts += 1;
                let report = make_report(
                    &mut rng,
                    &ctx,
                    format!("r{next_report}"),
                    &user,
                    u < deviants,
                    region,
                    period,
                );
                next_report += 1;
                let Ok(placement) = store.ledger().place(&report) else {
                    continue;
                };
                let stored = StoredReport {
                    report,
                    region: placement.region,
                    period: placement.period,
                    late: placement.late,
                };
                // Blacklisted users are turned away; anything else must succeed.
                match store.append(Event::ReportSubmitted(stored), ts) {
                    Ok(_) => {}
                    Err(_) => assert!(store.ledger().is_blacklisted(&user)),
                }
            }
        }
        if rng.random_bool(0.85) {
            ts += 1;
            detect_through(&mut store, period, ts);
        }
    }
    store
}

fn all_aggregates(ledger: &Ledger) -> Vec<String> {
    let mut out = Vec::new();
    for region in 0..ledger.context().grid.region_count() {
        for from in 0..PERIODS + 2 {
            for to in from..PERIODS + 2 {
                out.push(to_json(
                    &aggregate_region(ledger, region, from, to).unwrap(),
                ));
            }
        }
    }
    out
}

#[test]
fn replay_reproduces_live_state() {
    for seed in 0..1000 {
        let store = history(seed);
        let text = render_log(store.header(), store.memory_records());
        let replayed = replay(Cursor::new(text.as_bytes())).unwrap();
        assert_eq!(&replayed.ledger, store.ledger(), "seed {seed}");
        assert_eq!(replayed.records, store.memory_records());
        assert_eq!(render_log(&replayed.header, &replayed.records), text);
    }
}

#[test]
fn reopened_file_store_continues_where_it_stopped() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..20 {
        let store = history(seed);
        let records = store.memory_records();
        let half = records.len() / 2;
        let path = dir.path().join(format!("log-{seed}.jsonl"));
        write_log(&path, store.header(), &records[..half]).unwrap();
        let mut reopened = Store::open(&path).unwrap();
        for r in &records[half..] {
            assert_eq!(reopened.append(r.event.clone(), r.ts).unwrap(), r.seq);
        }
        drop(reopened);
        let reopened = Store::open(&path).unwrap();
        assert_eq!(reopened.ledger(), store.ledger());
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            render_log(store.header(), records)
        );
    }
}

/// The history as if `user_id` had never taken part.
fn without_user(records: &[EventRecord], user_id: &str) -> Vec<EventRecord> {
    records
        .iter()
        .filter_map(|r| {
            let event = match &r.event {
                Event::UserRegistered(p) if p.user_id == user_id => return None,
                Event::ReportSubmitted(s) if s.report.user_id == user_id => return None,
                Event::UserBlacklisted { user_id: u, .. } if u == user_id => return None,
                Event::DetectionRun(w) => {
                    let mut w = w.clone();
                    w.rows.retain(|row| row.user_id != user_id);
                    w.assessments.retain(|a| a.user_id != user_id);
                    Event::DetectionRun(w)
                }
                other => other.clone(),
            };
            Some(EventRecord {
                seq: r.seq,
                ts: r.ts,
                event,
            })
        })
        .collect()
}

fn fold(header: &LogHeader, records: &[EventRecord]) -> Ledger {
    let mut ledger = Ledger::new(header.context.clone());
    for r in records {
        ledger.check_and_apply(&r.event).unwrap();
    }
    ledger
}

#[test]
fn purge_matches_history_without_the_user() {
    let mut purged_users = 0;
    let mut seed = 0;
    while purged_users < 100 {
        let store = history(seed);
        seed += 1;
        let records = store.memory_records();
        let blacklisted: Vec<String> = store
            .ledger()
            .users()
            .filter(|u| u.is_blacklisted())
            .map(|u| u.user_id.clone())
            .collect();
        for user in &blacklisted {
            purged_users += 1;
            // Everyone else flagged stays in both histories.
            let oracle = fold(store.header(), &without_user(records, user));
            let expected = all_aggregates(&oracle);
            assert_eq!(
                all_aggregates(store.ledger()),
                expected,
                "seed {seed} user {user}"
            );

            let rewritten = purge_rewrite(store.header(), records, user, 999_999).unwrap();
            let compacted = fold(store.header(), &rewritten);
            assert_eq!(all_aggregates(&compacted), expected);
            assert!(compacted.reports().all(|s| &s.report.user_id != user));
            assert!(compacted
                .windows()
                .all(|w| w.rows.iter().all(|row| &row.user_id != user)));
            let text = render_log(store.header(), &rewritten);
            assert!(!text.contains(&format!("note from {user}")));
        }
        assert!(seed < 5000, "histories rarely flag anyone");
    }
}

#[test]
fn aggregates_only_draw_on_vetted_users() {
    for seed in 0..300 {
        let store = history(seed);
        let ledger = store.ledger();
        for region in 0..4 {
            let (report, provenance) = aggregate_region_traced(ledger, region, 0, PERIODS).unwrap();
            for ((qid, option), sources) in &provenance.buckets {
                let summary = report
                    .questions
                    .iter()
                    .find(|q| q.question_id == *qid)
                    .unwrap();
                assert_eq!(summary.histogram[option] as usize, sources.len());
                for (report_id, user) in sources {
                    assert!(!ledger.is_blacklisted(user));
                    let stored = ledger.report(report_id).unwrap();
                    assert_eq!(&stored.report.user_id, user);
                    assert_eq!(
                        ledger.verdict(user, stored.key()),
                        Some(Verdict::NonMalicious)
                    );
                }
            }
        }
    }
}
