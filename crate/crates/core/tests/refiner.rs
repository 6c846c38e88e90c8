mod common;

use proptest::prelude::*;
use scene_factory::lexicon::{Lexicon, Polarity};
use scene_factory::mock::{MockBackend, MockConfig};
use scene_factory::question::NumberStyle;
use scene_factory::refiner::{RefineAction, RefinementCategory, Refiner};
use scene_factory::scene_graph::{indefinite_article, pluralize};
use scene_factory::synthetic::{random_graph, SyntheticSpec, LABELS};

fn rewriter() -> MockBackend {
    MockBackend::new(MockConfig::default())
}

#[test]
fn qa_table_examples() {
    let r = Refiner::default();
    let bedroom = common::load("scenes/bedroom_4chairs.json");
    let bathroom = common::load("refine/bathroom_no_mirror.json");

    let v = r
        .refine(
            "How many chairs are in the room?",
            "3",
            &bedroom,
            None,
            NumberStyle::Words,
        )
        .unwrap();
    assert_eq!((v.action, v.final_text()), (RefineAction::Fixed, Some("four")));

    let v = r
        .refine(
            "Is there a mirror in the room?",
            "yes",
            &bathroom,
            None,
            NumberStyle::Words,
        )
        .unwrap();
    assert_eq!((v.action, v.final_text()), (RefineAction::Fixed, Some("no")));

    let v = r
        .refine(
            "Is there an ironing board in the room?",
            "no",
            &bathroom,
            None,
            NumberStyle::Words,
        )
        .unwrap();
    assert_eq!((v.action, v.final_text()), (RefineAction::Fixed, Some("yes")));

    for q in [
        "What is the material of the bathtub?",
        "Where is the shampoo dispenser?",
    ] {
        let v = r.refine(q, "unknown", &bathroom, None, NumberStyle::Words).unwrap();
        assert_eq!(v.category, RefinementCategory::NegativeResponse);
        assert_eq!(v.action, RefineAction::Dropped);
        assert!(v.revised.is_none());
    }

    let mock = rewriter();
    let v = r
        .refine(
            "Where is the mirror located?",
            "attached to wall-3, behind heater-18, to the left of shelf-19",
            &bathroom,
            Some(&mock),
            NumberStyle::Words,
        )
        .unwrap();
    assert_eq!(v.action, RefineAction::Rewritten);
    assert_eq!(
        v.final_text(),
        Some("attached to wall, behind heater, to the left of shelf")
    );
}

#[test]
fn dialogue_table_examples() {
    let r = Refiner::default();
    let dining = common::load("refine/dining_room.json");
    let laundry = common::load("refine/laundry_bathroom.json");
    let kitchen = common::load("refine/kitchen.json");
    let mock = rewriter();
    let one = |q: &str, a: &str, g| {
        let v = r
            .refine_dialogue(&[(q.to_string(), a.to_string())], g, Some(&mock))
            .unwrap();
        v.into_iter().next().unwrap()
    };

    let v = one(
        "How many chairs are in the room?",
        "There are 3 chairs in the room.",
        &dining,
    );
    assert_eq!(v.final_text(), Some("There are 4 chairs in the room."));
    let v = one(
        "How many washing machines are in the bathroom?",
        "I see there are two washing machines in the bathroom.",
        &laundry,
    );
    assert_eq!(
        v.final_text(),
        Some("I see there are 4 washing machines in the bathroom.")
    );

    let v = one(
        "Is there a cutting board in the kitchen?",
        "Yes, there is a cutting board in the kitchen.",
        &kitchen,
    );
    assert_eq!(v.final_text(), Some("No, there is no cutting board in the room."));
    let v = one(
        "Is there a computer on the desk?",
        "Yes, there is a computer and a monitor on the desk. However, the monitor is currently off.",
        &dining,
    );
    assert_eq!(v.final_text(), Some("No, there is no computer in the room."));

    let v = one(
        "Is there any stereo equipment?",
        "No, there is no stereo equipment in the room.",
        &dining,
    );
    assert_eq!(v.final_text(), Some("Yes, there is a stereo equipment in the room."));
    let v = one(
        "Is there a hair dryer in the bathroom?",
        "I'm sorry, but I couldn't find a hair dryer in the bathroom.",
        &laundry,
    );
    assert_eq!(v.final_text(), Some("Yes, I found a hair dryer in the room."));

    for a in [
        "No, there is nothing else mentioned in the scene graph.",
        "I'm sorry, but there is no mention of a mirror in the scene graph for the bathroom.",
    ] {
        assert_eq!(one("Anything else?", a, &laundry).action, RefineAction::Dropped);
    }

    let v = one(
        "Where should I put my things?",
        "You can place your backpack on the floor, to the left of the dining table-33. As for your bag, you can place it on the floor, to the left of the bed-10.",
        &dining,
    );
    assert_eq!(v.action, RefineAction::Rewritten);
    assert_eq!(
        v.final_text(),
        Some("You can place your backpack on the floor, to the left of the dining table. As for your bag, you can place it on the floor, to the left of the bed.")
    );
}

#[test]
fn dropped_turn_keeps_later_turns() {
    let r = Refiner::default();
    let g = common::load("refine/laundry_bathroom.json");
    let turns = vec![
        (
            "Where is the hair dryer?".to_string(),
            "It is lying on the sink.".to_string(),
        ),
        (
            "Anything else?".to_string(),
            "No, there is nothing else mentioned in the scene graph.".to_string(),
        ),
        (
            "Is there a sink in the room?".to_string(),
            "Yes, there is a sink in the room.".to_string(),
        ),
    ];
    let v = r.refine_dialogue(&turns, &g, None).unwrap();
    let actions: Vec<_> = v.iter().map(|x| x.action).collect();
    assert_eq!(actions, [RefineAction::Keep, RefineAction::Dropped, RefineAction::Keep]);
}

#[test]
fn rewrite_gives_up_after_configured_rounds() {
    let r = Refiner::default();
    let g = common::load("refine/dining_room.json");
    let stubborn = MockBackend::new(MockConfig {
        rewrite_failure_rate: 1.0,
        ..MockConfig::default()
    });
    let v = r
        .refine(
            "Where is it?",
            "next to bed-10",
            &g,
            Some(&stubborn),
            NumberStyle::Words,
        )
        .unwrap();
    assert_eq!(v.action, RefineAction::Dropped);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn refined_answers_agree_with_the_graph(
        seed in any::<u64>(),
        li in 0usize..LABELS.len(),
        stated in 0u64..12,
        say_yes in any::<bool>(),
    ) {
        let g = random_graph("p", SyntheticSpec::default(), seed);
        let label = LABELS[li];
        let r = Refiner::default();
        let lex = Lexicon::default();

        let q = format!("How many {} are in the room?", pluralize(label));
        let v = r.refine(&q, &stated.to_string(), &g, None, NumberStyle::Words).unwrap();
        let truth = common::oracle_count(&g, label) as u64;
        prop_assert_eq!(common::oracle_stated_count(v.final_text().unwrap()), Some(truth));
        let again = r.refine(&q, v.final_text().unwrap(), &g, None, NumberStyle::Words).unwrap();
        prop_assert_eq!(again.action, RefineAction::Keep);

        let q = format!("Is there {} {label} in the room?", indefinite_article(label));
        let raw = if say_yes { "yes" } else { "no" };
        let v = r.refine(&q, raw, &g, None, NumberStyle::Words).unwrap();
        let want = if truth > 0 { Polarity::Affirmative } else { Polarity::Negative };
        prop_assert_eq!(lex.polarity(v.final_text().unwrap()), Some(want));
        prop_assert!(!common::oracle_has_id(v.final_text().unwrap()));
    }
}
