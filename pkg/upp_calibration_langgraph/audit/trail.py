import logging

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def configure_logging(level: str = "INFO"):
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO), format=LOG_FORMAT, force=True)


class AuditTrail:
    def __init__(self, run_id: str):
        self.run_id = run_id
        self.logs = []
        self.anomalies = []
        logging.info(f"Started audit trail for run: {self.run_id}")

    def log_step(self, step_name: str, status: str, summary: str):
        log_entry = {"step": step_name, "status": status, "summary": summary}
        self.logs.append(log_entry)
        logging.info(f"[{self.run_id}] Step: {step_name}, Status: {status}, Summary: {summary}")

    def highlight_anomaly(self, anomaly_source: str, details: str):
        anomaly_entry = {"source": anomaly_source, "details": details}
        self.anomalies.append(anomaly_entry)
        logging.warning(f"[{self.run_id}] ANOMALY DETECTED: Source: {anomaly_source}, Details: {details}")

    def summary_report(self) -> str:
        """Plain-text report of the run; contains no timestamps so reruns compare equal."""
        if not self.logs:
            return "No processing steps were logged."
        lines = [f"Audit summary for run {self.run_id}", "", "Steps:"]
        lines += [f"  - {e['step']} [{e['status']}]: {e['summary']}" for e in self.logs]
        lines += ["", "Anomalies:"]
        lines += [f"  - {a['source']}: {a['details']}" for a in self.anomalies] or ["  none"]
        outcome = "failed" if any(e["status"] == "failed" for e in self.logs) else "completed"
        lines += ["", f"Outcome: {outcome}"]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"run_id": self.run_id, "steps": list(self.logs), "anomalies": list(self.anomalies)}
