import type { StudioClient } from "./api.js";
import type { RunStatus } from "./types.js";

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  onUpdate?: (status: RunStatus) => void;
}

/** Poll a run until it finishes. The service has no push channel by design. */
export async function pollRun(
  client: StudioClient,
  runId: string,
  { intervalMs = 1000, timeoutMs = 300_000, onUpdate }: PollOptions = {},
): Promise<RunStatus> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const status = await client.getRun(runId);
    onUpdate?.(status);
    if (status.status === "done" || status.status === "failed") return status;
    if (Date.now() > deadline) throw new Error(`run ${runId} still ${status.status} after ${timeoutMs} ms`);
    await sleep(intervalMs);
  }
}
