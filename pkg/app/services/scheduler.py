import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Sequence

logger = logging.getLogger(__name__)


class ReplicateScheduler:
    """调度器服务，用于并行执行相互独立的任务（多起点重启、实验重复）

    每个任务自带随机数种子与求解器状态，不共享可变数据；结果按提交顺序返回，
    因此并行与串行执行的结果一致。
    """

    def __init__(self, workers: int = 1, name: str = "replicates"):
        self.workers = max(1, int(workers))
        self.name = name
        # 添加任务状态追踪
        self.task_status: Dict[str, Any] = {"status": "done", "message": "无任务"}

    def map(self, fn: Callable[[Any], Any], jobs: Sequence[Any]) -> List[Any]:
        """依次（或并行）执行 fn(job)，返回与 jobs 同序的结果列表"""
        jobs = list(jobs)
        total = len(jobs)
        self.task_status = {"status": "running", "message": f"{self.name}: 0/{total}"}
        logger.info(f"开始执行任务 {self.name}，共 {total} 个，工作线程 {self.workers}")

        try:
            if self.workers == 1 or total <= 1:
                results = []
                for index, job in enumerate(jobs):
                    results.append(fn(job))
                    self.task_status["message"] = f"{self.name}: {index + 1}/{total}"
            else:
                with ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix=self.name) as pool:
                    results = list(pool.map(fn, jobs))
        except Exception as e:
            self.task_status = {"status": "done", "message": f"{self.name} 失败: {e}"}
            logger.error(f"任务 {self.name} 执行失败: {e}")
            raise

        self.task_status = {"status": "done", "message": f"{self.name}: {total}/{total} 完成"}
        logger.info(f"任务 {self.name} 完成")
        return results

    def get_task_status(self) -> Dict[str, Any]:
        """获取当前任务状态

        Returns:
            任务状态字典: 包含status和message
        """
        return self.task_status
