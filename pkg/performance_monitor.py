import time

import psutil

from monitoring import monitoring


class RunPerformanceMonitor:
    def __init__(self):
        self.run_metrics = {}
        self._next_id = 0

    def track_run_start(self, command):
        """Track command start time"""
        self._next_id += 1
        run_id = f"{command}_{self._next_id}"
        self.run_metrics[run_id] = {
            "command": command,
            "start_time": time.perf_counter(),
            "memory_start": psutil.Process().memory_info().rss
        }
        return run_id

    def track_run_end(self, run_id, exit_code):
        """Track command completion and performance"""
        if run_id not in self.run_metrics:
            return None

        metrics = self.run_metrics.pop(run_id)
        duration = time.perf_counter() - metrics["start_time"]
        memory_used = psutil.Process().memory_info().rss - metrics["memory_start"]

        perf_data = {
            "command": metrics["command"],
            "duration_ms": round(duration * 1000, 2),
            "exit_code": exit_code,
            "memory_used": memory_used
        }
        monitoring.track_stage(f"cli.{metrics['command']}", perf_data["duration_ms"], {
            "exit_code": exit_code,
            "memory_used": memory_used
        })
        return perf_data


# Global performance monitor
performance_monitor = RunPerformanceMonitor()
