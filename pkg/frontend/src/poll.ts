/** Label refresh by polling (default 2 s). Single-flight: a slow response
 * never stacks behind the next tick. */

export class LabelPoller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private busy = false;

  constructor(
    private readonly refresh: () => Promise<void>,
    private readonly intervalMs = 2000,
  ) {}

  start(): void {
    this.stop();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  private async tick(): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    try {
      await this.refresh();
    } catch {
      // transient fetch failures are fine; the next tick retries
    } finally {
      this.busy = false;
    }
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }
}
