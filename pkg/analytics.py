from collections import Counter, defaultdict


class AnalyticsEngine:
    def process_comparisons(self, comparisons, knn_returned=None, distances=None, k_nn=None):
        """Aggregate per-pair comparison outcomes into run metrics"""
        metrics = {
            "pairs": 0,
            "correct_decisions": 0,
            "decision_accuracy": 0.0,
            "wrong_pairs": [],
            "errors_by_poi": defaultdict(int),
            "flawed_decisions_wrong": 0,
            "knn_matches_truth": None
        }

        for c in comparisons:
            record = c if isinstance(c, dict) else c.to_dict()
            a, b = record["pair"]
            metrics["pairs"] += 1
            if record["decision"] == record["truth"]:
                metrics["correct_decisions"] += 1
            else:
                metrics["wrong_pairs"].append([a, b])
                metrics["errors_by_poi"][a] += 1
                metrics["errors_by_poi"][b] += 1
            flawed = record.get("flawed_decision")
            if flawed is not None and flawed != record["truth"]:
                metrics["flawed_decisions_wrong"] += 1

        if metrics["pairs"]:
            metrics["decision_accuracy"] = metrics["correct_decisions"] / metrics["pairs"]
        metrics["errors_by_poi"] = {str(k): v for k, v in sorted(metrics["errors_by_poi"].items())}

        if knn_returned is not None and distances is not None:
            metrics["knn_matches_truth"] = knn_matches_truth(knn_returned, distances, k_nn or len(knn_returned))
        return metrics

    def process_flaw_report(self, report):
        """Agreement statistics of a flaw demonstration"""
        data = report if isinstance(report, dict) else report.to_dict()
        confusion = data["confusion"]
        positives = confusion["true_positive"] + confusion["false_negative"]
        negatives = confusion["true_negative"] + confusion["false_positive"]
        measured = data["agreement_rate"]
        exact = data.get("exact_agreement_rate")
        return {
            "trials": data["trials"],
            "agreement_rate": measured,
            "exact_agreement_rate": exact,
            "deviation": None if exact is None else abs(measured - exact),
            "sensitivity": confusion["true_positive"] / positives if positives else None,
            "specificity": confusion["true_negative"] / negatives if negatives else None,
            "counterexamples": len(data["counterexamples"])
        }


def knn_matches_truth(returned, distances, k_nn):
    """Returned POIs carry the same multiset of true distances as the brute-force k nearest"""
    if len(returned) != k_nn or len(set(returned)) != k_nn:
        return False
    nearest = sorted(distances)[:k_nn]
    return Counter(distances[i] for i in returned) == Counter(nearest)


# Global analytics engine
analytics_engine = AnalyticsEngine()
