use super::*;
use crate::corpus;
use crate::mermaid::graph_from_str;
use crate::ops::testing::*;
use crate::validate::validate_graph;

const LISTING_GSM8K: &str = include_str!("../../tests/fixtures/listing_gsm8k.py");
const LISTING_MATH: &str = include_str!("../../tests/fixtures/listing_math.py");
const LISTING_HUMANEVAL: &str = include_str!("../../tests/fixtures/listing_humaneval.py");
const LISTING_MBPP: &str = include_str!("../../tests/fixtures/listing_mbpp.py");

fn kinds(ir: &ProgramIR) -> Vec<&str> {
    ir.node_calls().iter().map(|c| c.kind.as_str()).collect()
}

#[test]
fn gsm8k_lowers_to_eight_calls() {
    let ir = lower_to_ir(&gsm8k()).unwrap();
    assert_eq!(
        kinds(&ir),
        ["CustomOp", "ProgrammerOp", "ProgrammerOp", "ProgrammerOp", "ProgrammerOp", "ProgrammerOp", "ScEnsembleOp", "ProgrammerOp"]
    );
    let ens = ir.node_calls()[6];
    let Some((_, Operand::List { items })) = ens.args.iter().find(|(p, _)| p == "solutions") else { panic!() };
    assert_eq!(items.len(), 6);
    assert_eq!(ir.terminal, Operand::Output { binding: "p6".into(), kind: "ProgrammerOp".into() });
    assert_eq!(ir.params, ["problem"]);
}

#[test]
fn nothing_to_emit() {
    let err = lower_to_ir(&crate::graph::fixtures::minimal()).unwrap_err();
    assert_eq!(err.to_string(), "exit fed directly by entry; nothing to emit");
}

#[test]
fn humaneval_has_a_guard() {
    let ir = lower_to_ir(&humaneval()).unwrap();
    let guards: Vec<&Guard> = ir.steps.iter().filter_map(|s| if let Step::Guard(g) = s { Some(g) } else { None }).collect();
    assert_eq!(guards.len(), 1);
    assert_eq!((guards[0].test.node.as_str(), guards[0].repair.node.as_str()), ("T", "C4"));
    assert_eq!(ir.terminal, Operand::Var { name: guards[0].merged.clone() });
    assert_eq!(ir.params, ["problem", "entry_point"]);
    // The repair reads the tested solution, not the merged variable.
    assert_eq!(guards[0].repair.args[0].1, Operand::Output { binding: "t".into(), kind: "TestOp".into() });
}

#[test]
fn emission_is_stable_and_audits_clean() {
    let t = Templates::default_set();
    for g in [gsm8k(), math(), humaneval(), mbpp()] {
        let a = generate(&g, &t).unwrap();
        let b = generate(&g, &t).unwrap();
        assert_eq!(a, b);
        let report = structural_diff(&a.program, &g, &t);
        assert!(report.is_empty(), "{report:#?}\n{}", a.program);
        for line in a.program.lines() {
            if let Some(i) = line.find("prompt_custom.") {
                let name: String = line[i + 14..].chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
                assert!(a.prompts.contains(&format!("{name} = ")), "{name} not in prompt module");
            }
        }
    }
}

#[test]
fn emitted_gsm8k_text() {
    let out = generate(&gsm8k(), &Templates::default_set()).unwrap();
    assert!(out.program.contains("        c = await self.custom(input=problem, instruction=prompt_custom.SIMPLE_SOLVER_1, role=\"simple_solver_1\")\n"));
    assert!(out.program.contains("p1 = await self.programmer(problem=problem, analysis=\"Calculate step by step\")"));
    assert!(out.program.contains(
        "ensemble = await self.sc_ensemble(solutions=[c['response'], p1['output'], p2['output'], p3['output'], p4['output'], p5['output']], problem=problem)"
    ));
    assert!(out.program.contains("p6 = await self.programmer(problem=ensemble['response'], analysis=\"Refine and format final output\")"));
    assert!(out.program.contains("return p6['output'], self.llm.get_usage_summary()[\"total_cost\"]"));
    assert!(out.prompts.starts_with("SIMPLE_SOLVER_1 = \"Solve the math problem"));
    assert_eq!(out.prompts.lines().count(), 1);
}

#[test]
fn emitted_guard_text() {
    let out = generate(&humaneval(), &Templates::default_set()).unwrap();
    let expected = "\
        t = await self.test(problem=problem, solution=ensemble['response'], entry_point=entry_point)
        t_solution = t['solution']
        if not t['result']:
            c4 = await self.custom_code_generate(problem=t['solution'], entry_point=entry_point, instruction=prompt_custom.IMPROVED_SOLUTION_1)
            t_retest = await self.test(problem=problem, solution=c4['response'], entry_point=entry_point)
            if t_retest['result']:
                t_solution = c4['response']
        return t_solution,";
    assert!(out.program.contains(expected), "{}", out.program);
}

#[test]
fn no_prompts_gives_an_empty_module() {
    let text = "flowchart TD\nPROBLEM([Problem])\nP[\"Programmer<br/>(analysis: 'Work it out')\"]\nRETURN([Return])\nclass PROBLEM Interface\nclass P ProgrammerOp\nclass RETURN Interface\nPROBLEM --> |problem|P\nP --> RETURN\n";
    let g = graph_from_str(text).unwrap();
    assert!(validate_graph(&g).passed());
    let out = generate(&g, &Templates::default_set()).unwrap();
    assert_eq!(out.prompts, "");
    assert!(!out.program.contains("prompt_custom."));
}

#[test]
fn deleted_call_is_reported() {
    let t = Templates::default_set();
    let g = gsm8k();
    let out = generate(&g, &t).unwrap();
    let corrupt: String = out.program.lines().filter(|l| !l.contains("p3 = await")).map(|l| format!("{l}\n")).collect();
    let report = structural_diff(&corrupt, &g, &t);
    assert_eq!(report.missing_calls, ["P3"]);
    assert!(report.orphan_calls.is_empty());
}

#[test]
fn rewired_argument_is_reported() {
    let t = Templates::default_set();
    let g = gsm8k();
    let out = generate(&g, &t).unwrap();
    let corrupt = out.program.replace("p6 = await self.programmer(problem=ensemble['response']", "p6 = await self.programmer(problem=p5['output']");
    let report = structural_diff(&corrupt, &g, &t);
    assert!(report.flow_mismatches.iter().any(|m| m.node == "P6" && m.port == "problem"), "{report:#?}");
}

#[test]
fn published_listings_match_their_graphs() {
    let t = Templates::default_set();
    let g = gsm8k();
    let report = structural_diff(LISTING_GSM8K, &g, &t);
    assert!(report.is_empty(), "{report:#?}");
    let ours = structural_diff(&generate(&g, &t).unwrap().program, &g, &t);
    assert_eq!(report.call_nodes, ours.call_nodes, "call-for-call order");

    let report = structural_diff(LISTING_MATH, &math(), &t);
    assert!(report.is_empty(), "{report:#?}");
    let report = structural_diff(LISTING_MBPP, &mbpp(), &t);
    assert!(report.is_empty(), "{report:#?}");
}

#[test]
fn published_humaneval_listing_repairs_with_a_different_operator() {
    // The listing repairs through a plain custom call while the diagram uses a
    // code-generation node; the differ reports exactly that.
    let report = structural_diff(LISTING_HUMANEVAL, &humaneval(), &Templates::default_set());
    assert_eq!(report.missing_calls, ["C4"]);
    assert_eq!(report.orphan_calls, ["improved_solution_response"]);
}

#[test]
fn deeper_repair_chain_is_refused() {
    let text = corpus::HUMANEVAL
        .replace("    C4 --> RETURN\n", "    C4 --> C5\n    C5 --> RETURN\n")
        .replace("    class C4 CustomCodeGenerateOp\n", "    class C4 CustomCodeGenerateOp\n    class C5 CustomCodeGenerateOp\n")
        .replace("    ENSEMBLE[\"ScEnsemble<br/>\"]\n", "    C5[\"CustomCodeGenerate<br/>(instruction: improved_solution_1)\"]\n    ENSEMBLE[\"ScEnsemble<br/>\"]\n");
    let g = graph_from_str(&text).unwrap();
    assert!(validate_graph(&g).passed(), "{:?}", validate_graph(&g));
    let err = lower_to_ir(&g).unwrap_err();
    assert!(matches!(err, CodegenError::RepairShape { ref node, .. } if node.as_str() == "T"), "{err}");
}

#[test]
fn decision_nodes_are_not_emitted() {
    let text = corpus::MBPP
        .replace("T --> RETURN\n", "T --> D\nD --> RETURN\n")
        .replace("class T TestOp\n", "class T TestOp\nclass D DecisionOp\n")
        .replace("T[\"Test<br/>\"]\n", "T[\"Test<br/>\"]\nD{\"Decision\"}\n");
    let g = graph_from_str(&text).unwrap();
    assert!(validate_graph(&g).passed(), "{:?}", validate_graph(&g));
    assert!(matches!(lower_to_ir(&g), Err(CodegenError::Unlowered { ref kind, .. }) if kind == "DecisionOp"));
}

#[test]
fn invalid_graphs_are_refused() {
    let text = corpus::GSM8K.replace("C --> ENSEMBLE\nP1 --> ENSEMBLE\nP2 --> ENSEMBLE\nP3 --> ENSEMBLE\nP4 --> ENSEMBLE\n", "");
    let g = graph_from_str(&text).unwrap();
    assert!(matches!(lower_to_ir(&g), Err(CodegenError::Invalid(v)) if !v.passed()));
}

#[test]
fn template_holes() {
    let mut t = Templates::default_set();
    assert!(t.missing_kinds(&crate::graph::Registry::shared_default()).is_empty());
    t.kind.get_mut("CustomOp").unwrap().call.push_str(" {{bogus}}");
    let err = generate(&gsm8k(), &t).unwrap_err();
    assert_eq!(err, CodegenError::MissingHole { template: "CustomOp".into(), hole: "bogus".into() });
    t.kind.remove("CustomOp");
    assert_eq!(generate(&gsm8k(), &t).unwrap_err(), CodegenError::MissingTemplate("CustomOp".into()));
}

#[test]
fn bindings_avoid_keywords_and_parameters() {
    let text = "flowchart TD\nPROBLEM([Problem])\nSELF[\"Custom<br/>(role: a)\"]\nproblem_[\"Custom<br/>(role: a)\"]\nRETURN([Return])\nclass PROBLEM Interface\nclass SELF CustomOp\nclass problem_ CustomOp\nclass RETURN Interface\nPROBLEM --> |input|SELF\nSELF --> problem_\nproblem_ --> RETURN\n<prompt>\nA=\"Answer the question clearly and completely.\"\n</prompt>\n";
    let g = graph_from_str(text).unwrap();
    let ir = lower_to_ir(&g).unwrap();
    let names: Vec<&str> = ir.node_calls().iter().map(|c| c.binding.as_str()).collect();
    assert_eq!(names, ["self_", "problem_"]);
    let t = Templates::default_set();
    let out = emit(&ir, &t).unwrap();
    assert!(structural_diff(&out.program, &g, &t).is_empty());
}
