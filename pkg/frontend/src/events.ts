// Event-stream subscription: server-sent events when the browser provides
// EventSource, otherwise a short-interval poll of the same event log.
// Exactly one subscription per open session tab.

import type { Api, ServiceEvent } from "./api.js";

export type EventHandler = (event: ServiceEvent) => void;
export type Unsubscribe = () => void;

const EVENT_TYPES: ServiceEvent["type"][] = [
    "instruction",
    "question",
    "grid-update",
    "stored",
    "error",
];

export function subscribe(
    api: Api,
    sessionId: string,
    after: number,
    onEvent: EventHandler,
    pollIntervalMs = 250,
): Unsubscribe {
    if (typeof EventSource !== "undefined") {
        const source = new EventSource(`${api.baseUrl}/sessions/${sessionId}/events?after=${after}`);
        for (const type of EVENT_TYPES) {
            source.addEventListener(type, (raw) => {
                const msg = raw as MessageEvent;
                onEvent({
                    seq: Number(msg.lastEventId ?? -1),
                    type,
                    data: JSON.parse(msg.data ?? "{}"),
                });
            });
        }
        return () => source.close();
    }

    let cursor = after;
    let stopped = false;
    let inFlight = false;
    const timer = setInterval(async () => {
        if (stopped || inFlight) return;
        inFlight = true;
        try {
            const { events } = await api.pollEvents(sessionId, cursor);
            for (const event of events) {
                if (event.seq <= cursor) continue; // dedupe overlapping polls
                cursor = event.seq;
                if (!stopped) onEvent(event);
            }
        } catch {
            // transient polling failure; next tick retries
        } finally {
            inFlight = false;
        }
    }, pollIntervalMs);
    return () => {
        stopped = true;
        clearInterval(timer);
    };
}
