use std::collections::HashSet;

use plasticlab_core::ctgraph::{self, CtGraphConfig, ObsKind, Phase};

struct Outcome {
    reached_end: Option<usize>,
    crashed: bool,
    reward: f64,
    length: usize,
}

/// Play a full action sequence; stops at the first terminal state.
fn play(config: &CtGraphConfig, goal: usize, actions: &[usize]) -> Outcome {
    let (mut state, _) = ctgraph::reset(config, goal).unwrap();
    let mut reward = 0.0;
    for (i, &a) in actions.iter().enumerate() {
        let (next, r) = ctgraph::step(&state, a, config).unwrap();
        reward += r.reward;
        state = next;
        if r.done {
            return Outcome {
                reached_end: (state.phase == Phase::End).then(|| state.reached_index().unwrap()),
                crashed: state.phase == Phase::Crash,
                reward,
                length: i + 1,
            };
        }
    }
    Outcome {
        reached_end: None,
        crashed: false,
        reward,
        length: actions.len(),
    }
}

fn sequences(alphabet: usize, len: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..alphabet.pow(len as u32)).map(move |mut code| {
        let mut seq = vec![0; len];
        for slot in seq.iter_mut().rev() {
            *slot = code % alphabet;
            code /= alphabet;
        }
        seq
    })
}

#[test]
fn exhaustive_enumeration_counts_paths() {
    for (b, d) in [(2, 1), (2, 2), (2, 3), (3, 2)] {
        let config = CtGraphConfig::new(b, d);
        let len = 2 * d + 2;
        let ends = b.pow(d as u32);
        for goal in 0..ends {
            let mut successful = HashSet::new();
            let mut rewarded = 0;
            for seq in sequences(b + 1, len) {
                let out = play(&config, goal, &seq);
                match out.reached_end {
                    Some(end) => {
                        assert_eq!(out.length, len, "{seq:?}");
                        assert!(!out.crashed);
                        successful.insert(seq[..len].to_vec());
                        if end == goal {
                            rewarded += 1;
                            assert_eq!(out.reward, config.goal_reward);
                        } else {
                            assert_eq!(out.reward, config.step_reward * len as f64);
                        }
                    }
                    None => assert!(out.crashed, "{seq:?} neither crashed nor ended"),
                }
            }
            assert_eq!(successful.len(), ends, "b={b} d={d}");
            assert_eq!(rewarded, 1);
        }
    }
}

#[test]
fn oracle_reaches_every_goal() {
    for (b, d) in [(2, 1), (2, 2), (2, 3), (3, 2)] {
        let config = CtGraphConfig::new(b, d);
        for goal in 0..ctgraph::num_end_states(&config) {
            let actions = ctgraph::oracle_actions(goal, &config);
            assert_eq!(actions.len(), config.episode_len());
            let out = play(&config, goal, &actions);
            assert_eq!(out.reached_end, Some(goal));
            assert_eq!(out.reward, config.goal_reward);
        }
    }
}

#[test]
fn wait_delay_stretches_episodes() {
    let config = CtGraphConfig {
        wait_delay: 3,
        ..CtGraphConfig::new(2, 2)
    };
    let actions = ctgraph::oracle_actions(2, &config);
    assert_eq!(actions.len(), 1 + 2 * 4 + 3);
    assert_eq!(play(&config, 2, &actions).reached_end, Some(2));
}

#[test]
fn constant_wait_crashes_at_first_decision() {
    let config = CtGraphConfig::new(2, 2);
    let out = play(&config, 0, &[0; 6]);
    assert!(out.crashed);
    assert_eq!(out.length, 3);
    assert_eq!(out.reward, config.crash_reward);
}

#[test]
fn stepping_a_finished_episode_is_an_error() {
    let config = CtGraphConfig::new(2, 2);
    let (state, _) = ctgraph::reset(&config, 0).unwrap();
    let (crashed, r) = ctgraph::step(&state, 1, &config).unwrap();
    assert!(r.done);
    assert!(ctgraph::step(&crashed, 0, &config).is_err());
    assert!(ctgraph::reset(&config, 4).is_err());
    assert!(ctgraph::step(&state, 3, &config).is_err());
}

#[test]
fn observations_depend_only_on_phase() {
    let config = CtGraphConfig {
        obs_seed: 9,
        ..CtGraphConfig::new(2, 2)
    };
    let images = ctgraph::all_observations(&config);
    assert_eq!(images.len(), 6);
    let kinds: HashSet<ObsKind> = images.iter().map(|o| o.kind).collect();
    assert_eq!(kinds.len(), 6);
    for (i, a) in images.iter().enumerate() {
        assert_eq!(a.pixels.len(), 144);
        assert!(a.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        for b in &images[i + 1..] {
            assert_ne!(a.pixels, b.pixels);
        }
    }
    // Every decision state shows the same image whatever the path.
    let (s0, _) = ctgraph::reset(&config, 3).unwrap();
    let (s1, _) = ctgraph::step(&s0, 0, &config).unwrap();
    let (s2, r2) = ctgraph::step(&s1, 0, &config).unwrap();
    let (s3, _) = ctgraph::step(&s2, 2, &config).unwrap();
    let (_, r4) = ctgraph::step(&s3, 0, &config).unwrap();
    assert_eq!(r2.observation.kind, ObsKind::Decision);
    assert_eq!(r4.observation, r2.observation);
    assert_eq!(ctgraph::all_observations(&config), images);
}

#[test]
fn goal_image_carries_the_cue() {
    let config = CtGraphConfig {
        obs_seed: 3,
        ..CtGraphConfig::new(2, 2)
    };
    let goal = ctgraph::observation_for(Phase::End, true, &config);
    let miss = ctgraph::observation_for(Phase::End, false, &config);
    assert!(goal.pixels[0] == 1.0 && goal.pixels[3 * 12 + 3] == 1.0);
    assert!(miss.pixels.iter().all(|&p| p <= 0.75 + 1e-12));
}
