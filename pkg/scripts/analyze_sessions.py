import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np
import pandas as pd

# Add the scripts directory to the path for imports
script_dir = Path(__file__).parent
sys.path.insert(0, str(script_dir))

# Now import after path is set
from tprseg.activity_units import activity_unit_table, derive_activity_units, serialize_activity_units  # noqa: E402
from tprseg.config import ConfigError, RunConfig  # noqa: E402
from tprseg.corpus import (  # noqa: E402
    discover_sessions, find_annotations, load_annotations, load_corpus, load_session, session_stem, write_manifest,
)
from tprseg.hof_analysis import (  # noqa: E402
    AnalysisError, annotation_agreement, combine_transition_matrices, cut_at_state_boundaries, cut_report_table,
    pause_fraction_by_state, state_counts, state_label_correlation, state_summary, StateTrack,
    suggest_hof_states, task_distribution_by_state, transition_matrix, transition_table, ts_label_ranking_by_state,
)
from tprseg.iki_profile import (  # noqa: E402
    build_profiles, corpus_descriptors, iki_distribution, profile_summary, profile_table, profiles_from_table,
    session_ikis, summary_table, typing_speed, wp_sample,
)
from tprseg.models import DataError, MODES, STATES, TRANSLATION  # noqa: E402
from tprseg.render import (  # noqa: E402
    GraphSpec, LAYERS, parse_alignment, render_distribution, render_progression_graph,
)
from tprseg.report import Column, ReportTable, provenance, write_table  # noqa: E402
from tprseg.segmentation import (  # noqa: E402
    coverage_table, corpus_ts_summary, hierarchy_correlations, label_share_correlation, segment_session,
    SegmentationError, task_table, task_type_summary, translator_hierarchy_summary, ts_label_statistics,
)
from tprseg.session_parser import (  # noqa: E402
    ColumnMapping, serialize_annotations, serialize_session, SessionFormatError, validate_session,
)
from tprseg.stats import (  # noqa: E402
    build_pairing_plan, identification_experiment, INVERTED, parse_pairing_plan,
    serialize_pairing_plan,
)
from tprseg.synthetic import generate_corpus  # noqa: E402
from tprseg.translog_xml import load_translog_xml  # noqa: E402
from setup_logging import setup_logging  # noqa: E402

logger = logging.getLogger("analyze_sessions")


class Run:
    """Resolved configuration and output bookkeeping of one command."""

    def __init__(self, args, config):
        self.args = args
        self.config = config
        self.out = Path(args.out)
        self.formats = tuple(args.format.split(","))
        self.outputs = []
        self.inputs = []

    @property
    def mapping(self):
        return ColumnMapping.from_config(self.config.columns, self.config.kinds)

    def corpus(self):
        sessions = load_corpus(self.args.paths, self.config.session_glob, self.mapping)
        if not sessions:
            raise DataError("no sessions found")
        self.inputs += list(sessions)
        return sessions

    def profile_options(self):
        return {
            "boundary_chars": self.config.boundary_chars,
            "rsp_multiplier": self.config.rsp_multiplier,
            "tsp_multiplier": self.config.tsp_multiplier,
            "rsp_floor": self.config.rsp_floor,
            "fold_word_final": self.config.fold_word_final,
        }

    def profiles(self, sessions):
        if getattr(self.args, "profiles", None):
            self.inputs.append(Path(self.args.profiles))
            frame = pd.read_csv(self.args.profiles, dtype={"translator": str})
            return profiles_from_table(frame, self.config.rsp_floor)
        return build_profiles(sessions, **self.profile_options())

    def write(self, *tables, directory=None):
        for table in tables:
            self.outputs += write_table(table, directory or self.out, self.formats, self.config.float_digits)

    def write_text(self, relative, text):
        path = self.out / relative
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        self.outputs.append(path)
        return path

    def write_json(self, relative, document):
        return self.write_text(relative, json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False) + "\n")

    def finish(self, command):
        self.outputs.append(write_manifest(self.out, command, self.inputs, self.config, self.outputs))


def _segment_all(run, sessions, profiles):
    trees = {}
    for path, session in sessions.items():
        if session.translator_id not in profiles:
            raise SegmentationError(f"{path}: no profile for translator {session.translator_id}")
        trees[path] = segment_session(session, profiles[session.translator_id], run.config.delay_threshold)
    return trees


def cmd_validate(run):
    try:
        files = discover_sessions(run.args.paths, run.config.session_glob)
    except DataError as e:
        print(f"❌ {e}")
        return 1
    if not files:
        print("❌ no sessions")
        return 2

    failed = 0
    for path in files:
        try:
            session = load_session(path, run.mapping)
        except SessionFormatError as e:
            print(f"❌ {e}")
            failed += 1
            continue
        warnings = [issue for issue in validate_session(session) if issue.severity != "error"]
        for issue in warnings:
            print(f"⚠️  {path}: {issue.code}: {issue.message}")
        print(f"✅ {path}: {len(session.keys)} keys, {len(session.fixations)} fixations")

    print(f"Validated {len(files)} session file(s), {failed} with errors.")
    return 1 if failed else 0


def cmd_profile(run):
    sessions = run.corpus()
    profiles = build_profiles(sessions.values(), **run.profile_options())

    languages = {}
    by_language = defaultdict(list)
    for session in sorted(sessions.values(), key=lambda s: s.key):
        languages.setdefault(session.translator_id, session.target_lang)
        by_language[session.target_lang].append(np.diff(session.key_times()))

    run.write(
        profile_table(profiles),
        corpus_descriptors(sessions.values()),
        profile_summary(profiles, languages),
        typing_speed(sessions.values()),
    )
    for language in sorted(by_language):
        summary = iki_distribution(np.concatenate(by_language[language]), kde=True)
        run.write(summary_table(summary, name=f"iki_distribution_{language}", label=language))

    invalid = [p.translator_id for p in profiles.values() if not p.valid]
    print(f"Profiled {len(profiles)} translator(s) from {len(sessions)} session(s).")
    if invalid:
        print(f"⚠️  Invalid profiles (TSP <= RSP): {', '.join(invalid)}")
    return 0


def cmd_segment(run):
    sessions = run.corpus()
    profiles = run.profiles(sessions.values())
    trees = _segment_all(run, sessions, profiles)

    for path, tree in trees.items():
        run.write_json(Path("segments") / f"{session_stem(path)}.json", tree.todict())

    ordered = [trees[path] for path in sorted(trees)]
    run.write(
        task_table(ordered),
        corpus_ts_summary(ordered),
        ts_label_statistics(ordered),
        coverage_table(ordered),
        task_type_summary(ordered),
        translator_hierarchy_summary(ordered),
    )
    try:
        run.write(hierarchy_correlations(ordered))
    except SegmentationError as e:
        logger.warning(f"Hierarchy correlations skipped: {e}")
    if len({tree.language for tree in ordered}) > 1:
        run.write(label_share_correlation(ordered))

    segments = sum(len(tree.segments) for tree in ordered)
    tasks = sum(len(tree.tasks) for tree in ordered)
    print(f"Segmented {len(ordered)} session(s) into {tasks} Tasks and {segments} TSs.")
    return 0


def cmd_hof(run):
    config = run.config
    sessions = run.corpus()
    profiles = run.profiles(sessions.values())
    trees = _segment_all(run, sessions, profiles)

    pairs = []
    reports = []
    units = {}
    agreement = []
    tracks = defaultdict(list)
    for path in sorted(trees):
        tree = trees[path]
        session = tree.session
        stem = session_stem(path)
        aus = derive_activity_units(session, tree.profile, config.au_silence, config.au_min_duration)
        units[session.key] = aus
        run.write_text(Path("activity_units") / f"{stem}.au.tsv", serialize_activity_units(aus))
        draft = suggest_hof_states(session, tree, aus, config.orientation_min, config.hesitation_deletion_share)
        run.write_text(Path("drafts") / f"{stem}{config.annotation_suffix}", serialize_annotations(draft))

        annotation_path = find_annotations(path, config.annotation_suffix, run.args.annotations)
        if annotation_path is None:
            logger.warning(f"{path}: no annotation file, skipped")
            continue
        run.inputs.append(annotation_path)
        annotations = load_annotations(annotation_path)
        track = StateTrack(annotations, session.key, config.unassigned_policy)
        cut_tree, report = cut_at_state_boundaries(tree, track)
        pairs.append((cut_tree, track))
        reports.append(report)
        tracks[session.target_lang].append(track)
        agreement.append((session.key, annotation_agreement(draft, annotations)))

    run.write(activity_unit_table(units))
    if not pairs:
        raise AnalysisError("no annotated sessions")

    matrices = {
        language: combine_transition_matrices([transition_matrix(t) for t in language_tracks])
        for language, language_tracks in tracks.items()
    }
    if len(matrices) > 1:
        matrices["all"] = combine_transition_matrices(list(matrices.values()))

    run.write(
        state_counts(tracks),
        transition_table(matrices),
        task_distribution_by_state(pairs),
        ts_label_ranking_by_state(pairs, config.top_k),
        pause_fraction_by_state(pairs),
        cut_report_table(reports),
        state_label_correlation(pairs),
        ReportTable(
            name="draft_agreement",
            columns=[Column("session", "str"), Column("agreement", "float", "fraction")],
            rows=agreement,
            provenance=provenance(
                "annotation_agreement",
                {"orientation_min": config.orientation_min, "deletion_share": config.hesitation_deletion_share},
                [key for key, _ in agreement],
            ),
        ),
    )
    for state in STATES:
        try:
            run.write(state_summary(pairs, state))
        except AnalysisError as e:
            logger.warning(f"State summary skipped: {e}")

    cut = sum(r.segments_cut for r in reports)
    total = sum(r.segments for r in reports)
    print(f"Analysed {len(pairs)} annotated session(s); {cut} of {total} TSs cut at state boundaries.")
    return 0


def cmd_identify(run):
    config = run.config
    sessions = run.corpus()
    if run.args.pairs:
        run.inputs.append(Path(run.args.pairs))
        with open(run.args.pairs, "r", encoding="utf-8") as f:
            plan = parse_pairing_plan(f)
    else:
        plan = build_pairing_plan(sessions.values())
    if not plan:
        raise DataError("pairing plan is empty")

    samples = {}
    for session in sessions.values():
        records = session_ikis(session, config.boundary_chars, config.fold_word_final)
        samples[session.key] = {
            "all": np.diff(session.key_times()).tolist(),
            "within_word": wp_sample(records),
        }

    rule = INVERTED if run.args.inverted_rule else config.ks_rule
    sample_choice = {
        "translation": config.identify_same_sample,
        "postedit": config.identify_postedit_sample,
        "different": config.identify_same_sample,
    }
    table, outcomes = identification_experiment(
        samples, plan, rule=rule, alpha=config.ks_alpha, sample_choice=sample_choice, exact_max=config.ks_exact_max,
    )
    pair_tests = ReportTable(
        name="pair_tests",
        columns=[
            Column("first", "str"),
            Column("second", "str"),
            Column("comparison", "str"),
            Column("statistic", "float"),
            Column("p_value", "float"),
            Column("decision", "str"),
            Column("correct", "bool"),
        ],
        rows=[
            (o.pair.first, o.pair.second, o.comparison, o.statistic, o.p_value, o.decision, o.correct)
            for o in outcomes
        ],
        provenance=table.provenance,
    )
    run.write(table, pair_tests)
    run.write_text("pairing_plan.tsv", serialize_pairing_plan(plan))

    correct = sum(1 for o in outcomes if o.correct)
    print(f"Tested {len(outcomes)} pair(s) under the {rule} rule: {correct} decided correctly.")
    return 0


def _find_session(sessions, wanted):
    for path, session in sessions.items():
        if wanted in (session.key, session.session_id, session_stem(path)):
            return path, session
    raise DataError(f"unknown session {wanted!r}")


def cmd_render(run):
    args = run.args
    config = run.config
    sessions = run.corpus()
    spec = GraphSpec(
        start=args.start,
        end=args.end,
        layers=frozenset(args.layers.split(",")) if args.layers else LAYERS,
        colors=config.colors,
        width=config.figure_width,
        height=config.figure_height,
        font_size=config.font_size,
    )

    if args.graph:
        path, session = _find_session(sessions, args.graph)
        profile = run.profiles([s for s in sessions.values() if s.translator_id == session.translator_id])
        if session.translator_id not in profile:
            raise SegmentationError(f"no profile for translator {session.translator_id}")
        tree = segment_session(session, profile[session.translator_id], config.delay_threshold)
        track = None
        annotation_path = find_annotations(path, config.annotation_suffix, args.annotations)
        if annotation_path is not None:
            run.inputs.append(annotation_path)
            track = StateTrack(load_annotations(annotation_path), session.key, config.unassigned_policy)
        if args.alignment:
            run.inputs.append(Path(args.alignment))
            with open(args.alignment, "r", encoding="utf-8") as f:
                spec.alignment = parse_alignment(f)
        aus = derive_activity_units(session, tree.profile, config.au_silence, config.au_min_duration)
        svg = render_progression_graph(session, tree, track, aus, spec)
        target = run.out / f"{session_stem(path)}.svg"
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(svg)
        run.outputs.append(target)
        print(f"Rendered progression graph {target}")

    if args.dist:
        groups = defaultdict(list)
        for session in sessions.values():
            group = session.study_id if args.by == "study" else session.target_lang
            groups[group].append(np.diff(session.key_times()))
        summaries = {
            name: iki_distribution(np.concatenate(ikis), kde=args.dist == "density")
            for name, ikis in groups.items()
        }
        svg = render_distribution(summaries, args.dist, spec, max_x=args.max_iki)
        target = run.out / f"iki_{args.dist}.svg"
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(svg)
        run.outputs.append(target)
        print(f"Rendered {args.dist} figure {target}")
    return 0


def cmd_generate(run):
    args = run.args
    corpus = generate_corpus(args.seed, translators=args.translators, sessions_per_translator=args.sessions)
    profiles = {}
    planted = {}
    for item in corpus:
        session = item.session
        stem = f"{session.study_id}_{session.session_id}"
        run.write_text(Path("sessions") / f"{stem}.session.tsv", serialize_session(session))
        run.write_text(Path("sessions") / f"{stem}{run.config.annotation_suffix}",
                       serialize_annotations(item.annotations))
        profiles[session.translator_id] = item.profile
        planted[session.key] = item.labels
    run.write(profile_table(profiles))
    run.write_json("planted.json", {"seed": args.seed, "segments": planted})
    print(f"Generated {len(corpus)} synthetic session(s) with seed {args.seed} in {run.out}")
    return 0


def cmd_convert(run):
    args = run.args
    for source in map(Path, args.paths):
        run.inputs.append(source)
        with open(source, "r", encoding="utf-8") as f:
            session = load_translog_xml(
                f,
                study=args.study,
                session=args.session or source.stem,
                translator=args.translator,
                mode=args.mode,
                source_lang=args.source_lang,
                target_lang=args.target_lang,
            )
        target = run.write_text(f"{source.stem}.session.tsv", serialize_session(session))
        print(f"Converted {source} -> {target} ({len(session.keys)} keys, {len(session.fixations)} fixations)")
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "profile": cmd_profile,
    "segment": cmd_segment,
    "hof": cmd_hof,
    "identify": cmd_identify,
    "render": cmd_render,
    "generate": cmd_generate,
    "convert": cmd_convert,
}


def main(args):
    try:
        config = RunConfig.load(args.config).override(
            ks_rule=INVERTED if args.inverted_rule else None,
            rsp_multiplier=args.rsp_multiplier,
            tsp_multiplier=args.tsp_multiplier,
            ks_alpha=args.alpha,
        )
    except (ConfigError, ValueError, FileNotFoundError) as e:
        print(f"❌ Configuration error: {e}")
        sys.exit(2)

    run = Run(args, config)
    try:
        code = COMMANDS[args.command](run)
    except DataError as e:
        logger.debug("Data error", exc_info=True)
        print(f"❌ {e}")
        sys.exit(1)

    if code == 0 and args.command != "validate":
        run.finish(args.command)
    sys.exit(code)


if __name__ == '__main__':
    import argparse

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        '--config',
        type=str,
        default=None,
        help="Path to the config file (default: config.ini from the working directory, if present)."
    )
    common.add_argument('--out', type=str, default="out", help="Output directory (default: out).")
    common.add_argument('--format', type=str, default="csv", help="Table formats, comma separated: csv,json.")
    common.add_argument(
        '--paper-literal',
        '--inverted-rule',
        dest='inverted_rule',
        action='store_true',
        help="Decide 'same translator' when the KS2 test returns p < alpha."
    )
    common.add_argument('--seed', type=int, default=0, help="Seed of the synthetic generator.")
    common.add_argument('--rsp-multiplier', type=float, default=None, help="Override rsp_multiplier.")
    common.add_argument('--tsp-multiplier', type=float, default=None, help="Override tsp_multiplier.")
    common.add_argument('--alpha', type=float, default=None, help="Override ks_alpha.")
    common.add_argument(
        '--debug',
        action='store_true',
        help="Print debug information, such as per-session segmentation steps."
    )

    parser = argparse.ArgumentParser(description='Keystroke pause segmentation and HOF-state analysis')
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
            ("validate", "Check session files"),
            ("profile", "Per-translator RSP/TSP thresholds and IKI distributions"),
            ("segment", "Task / Task Segment hierarchy and TS label statistics"),
            ("hof", "HOF state tables, activity units and drafted states"),
            ("identify", "KS2 translator identification experiment"),
            ("render", "Progression graphs and IKI distribution figures")):
        sub = subparsers.add_parser(name, parents=[common], help=help_text)
        sub.add_argument('paths', nargs='+', help="Session files or directories.")
        if name in ("segment", "hof", "render"):
            sub.add_argument('--profiles', type=str, default=None, help="profiles.csv to use instead of fitting.")
        if name in ("hof", "render"):
            sub.add_argument('--annotations', type=str, default=None, help="Directory with annotation files.")
        if name == "identify":
            sub.add_argument('--pairs', type=str, default=None, help="Pairing plan TSV (first, second, class).")
        if name == "render":
            sub.add_argument('--graph', type=str, default=None, help="Session key or id to draw.")
            sub.add_argument('--dist', choices=("cdf", "density"), default=None, help="Distribution figure.")
            sub.add_argument('--by', choices=("study", "language"), default="study", help="Overlay grouping.")
            sub.add_argument('--start', type=int, default=None, help="Graph window start (ms).")
            sub.add_argument('--end', type=int, default=None, help="Graph window end (ms).")
            sub.add_argument('--layers', type=str, default=None, help=f"Comma list of {','.join(sorted(LAYERS))}.")
            sub.add_argument('--alignment', type=str, default=None, help="ST-TT alignment TSV.")
            sub.add_argument('--max-iki', type=float, default=None, help="Right limit of distribution x axis.")

    generate = subparsers.add_parser("generate", parents=[common], help="Write a planted synthetic corpus")
    generate.add_argument('--translators', type=int, default=4, help="Number of translators.")
    generate.add_argument('--sessions', type=int, default=3, help="Sessions per translator.")

    convert = subparsers.add_parser("convert", parents=[common], help="Translog-II XML to session TSV")
    convert.add_argument('paths', nargs='+', help="Translog-II XML files.")
    convert.add_argument('--study', type=str, required=True, help="Study id.")
    convert.add_argument('--translator', type=str, required=True, help="Translator id.")
    convert.add_argument('--session', type=str, default=None, help="Session id (default: file stem).")
    convert.add_argument('--mode', choices=MODES, default=TRANSLATION, help="Session mode.")
    convert.add_argument('--source-lang', type=str, default=None, help="Source language if not in the log.")
    convert.add_argument('--target-lang', type=str, default=None, help="Target language if not in the log.")

    args = parser.parse_args()
    setup_logging(args.debug)

    if args.command == "render" and not (args.graph or args.dist):
        parser.error("render needs --graph and/or --dist")

    main(args)
