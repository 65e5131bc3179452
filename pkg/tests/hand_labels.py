"""Hand-labeled tuple-extraction suite.

Each item: (sentence, [(abnormality, negation, attribute set), ...]).
Labels reflect what a human annotator restricted to the bundled lexicon's
canonical names would produce; the rule-based extractor is expected to agree
on at least 27 of the 30 sentences.
"""

HAND_LABELED = [
    ("no pleural effusion", [("pleural effusion", "negative", set())]),
    (
        "there is a small left pleural effusion",
        [("pleural effusion", "positive", {"small", "left"})],
    ),
    (
        "no focal consolidation but effusion noted",
        [
            ("consolidation", "negative", {"focal"}),
            ("pleural effusion", "positive", set()),
        ],
    ),
    # the rules cannot recover "cardiomegaly" from this phrasing
    ("the heart is enlarged", [("cardiomegaly", "positive", set())]),
    # a human reads this as a normal statement, not an abnormality
    ("lungs are clear", []),
    ("possible pneumonia in the left lower lobe", []),
    ("no evidence of pneumothorax", [("pneumothorax", "negative", set())]),
    ("stable cardiomegaly", [("cardiomegaly", "positive", {"stable"})]),
    (
        "calcified granuloma in the left upper lobe",
        [("calcified granuloma", "positive", {"left", "upper lobe"})],
    ),
    ("right basilar atelectasis", [("atelectasis", "positive", {"right", "basilar"})]),
    ("no acute bony abnormality", []),
    (
        "mild edema is seen with a small right effusion",
        [
            ("edema", "positive", {"mild"}),
            ("pleural effusion", "positive", {"small", "right"}),
        ],
    ),
    (
        "catheter tip in the left central subclavian",
        [("catheter tip", "positive", {"left", "central", "subclavian"})],
    ),
    (
        "moderate cardiomegaly is unchanged",
        [("cardiomegaly", "positive", {"moderate", "unchanged"})],
    ),
    (
        "no pneumothorax or pleural effusion",
        [("pneumothorax", "negative", set()), ("pleural effusion", "negative", set())],
    ),
    ("scattered calcified granulomas", [("calcified granuloma", "positive", {"scattered"})]),
    (
        "degenerative changes of the thoracic spine",
        [("degenerative changes", "positive", {"thoracic spine"})],
    ),
    (
        "left lower lobe opacity may represent pneumonia",
        [("opacity", "positive", {"left", "lower lobe"})],
    ),
    ("unchanged left effusion", [("pleural effusion", "positive", {"unchanged", "left"})]),
    (
        "no consolidation pneumothorax or large effusion",
        [
            ("consolidation", "negative", set()),
            ("pneumothorax", "negative", set()),
            ("pleural effusion", "negative", {"large"}),
        ],
    ),
    ("biapical scarring", [("scarring", "positive", set())]),
    (
        "small right apical pneumothorax",
        [("pneumothorax", "positive", {"small", "right", "apical"})],
    ),
    # a human maps this phrasing onto the widened-mediastinum finding
    ("the mediastinum is widened", [("enlarged cardiomediastinum", "positive", set())]),
    (
        "chronic interstitial markings are stable",
        [("interstitial markings", "positive", {"chronic", "stable"})],
    ),
    ("no displaced rib fracture", [("rib fracture", "negative", {"displaced"})]),
    (
        "there is no free air under the diaphragm",
        [("pneumoperitoneum", "negative", {"diaphragm"})],
    ),
    (
        "persistent right middle lobe atelectasis",
        [("atelectasis", "positive", {"persistent", "right", "middle lobe"})],
    ),
    ("pacemaker leads are in stable position", [("pacemaker", "positive", {"stable"})]),
    ("no suspicious pulmonary nodule is identified", [("nodule", "negative", set())]),
    (
        "severe emphysema with apical bullae",
        [("emphysema", "positive", {"severe"}), ("bulla", "positive", {"apical"})],
    ),
]
