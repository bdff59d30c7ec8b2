// Coding-session state machine: one active coder stepping through one
// session's utterances. The draft flags are the optimistic UI state; a
// failed save reverts them to the last acknowledged server flags and
// surfaces a retry banner, so nothing is ever lost silently.

import { AnnotationApi } from './api'
import type { Category, Flags, SessionSummary, UtteranceView } from './types'
import { allFalse } from './types'

export type SaveStatus = 'idle' | 'dirty' | 'saving' | 'error'

export interface CodingState {
  coder: string
  sessionId: string | null
  sessions: SessionSummary[]
  utterances: UtteranceView[]
  cursor: number
  draft: Flags
  status: SaveStatus
  lastError: string | null
  reviewMode: boolean
  codedByMe: number
}

type Listener = (state: CodingState) => void

const clone = (flags: Flags): Flags => ({ ...flags })

export class CodingStore {
  private state: CodingState = {
    coder: '',
    sessionId: null,
    sessions: [],
    utterances: [],
    cursor: 0,
    draft: allFalse(),
    status: 'idle',
    lastError: null,
    reviewMode: false,
    codedByMe: 0,
  }

  private listeners: Listener[] = []

  constructor(private readonly api: AnnotationApi) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener)
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener)
    }
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.snapshot())
  }

  snapshot(): CodingState {
    return { ...this.state, draft: clone(this.state.draft) }
  }

  current(): UtteranceView | null {
    return this.state.utterances[this.state.cursor] ?? null
  }

  setCoder(coder: string): void {
    this.state.coder = coder.trim()
    this.state.codedByMe = this.countCodedByMe()
    this.loadDraftFromServerState()
    this.emit()
  }

  setReviewMode(on: boolean): void {
    this.state.reviewMode = on
    this.emit()
  }

  async loadSessions(): Promise<void> {
    this.state.sessions = await this.api.sessions()
    this.emit()
  }

  async openSession(sessionId: string): Promise<void> {
    this.state.utterances = await this.api.utterances(sessionId)
    this.state.sessionId = sessionId
    this.state.cursor = 0
    this.state.lastError = null
    this.state.codedByMe = this.countCodedByMe()
    this.loadDraftFromServerState()
    this.emit()
  }

  private countCodedByMe(): number {
    const { coder, utterances } = this.state
    if (!coder) return 0
    return utterances.filter((u) => u.coded_by.includes(coder)).length
  }

  private serverFlags(): Flags {
    const u = this.current()
    const mine = u && this.state.coder ? u.codes[this.state.coder] : undefined
    return mine ? clone(mine) : allFalse()
  }

  private loadDraftFromServerState(): void {
    this.state.draft = this.serverFlags()
    this.state.status = 'idle'
  }

  toggle(category: Category): void {
    if (!this.current()) return
    // Categories are independent flags; any subset, all four included.
    this.state.draft[category] = !this.state.draft[category]
    this.state.status = 'dirty'
    this.emit()
  }

  move(delta: number): void {
    const next = this.state.cursor + delta
    if (next < 0 || next >= this.state.utterances.length) return
    this.state.cursor = next
    this.state.lastError = null
    this.loadDraftFromServerState()
    this.emit()
  }

  async save(): Promise<boolean> {
    const utterance = this.current()
    if (!utterance || !this.state.coder) {
      this.state.lastError = this.state.coder
        ? 'nothing to save'
        : 'pick a coder id before saving'
      this.state.status = 'error'
      this.emit()
      return false
    }
    const attempted = clone(this.state.draft)
    this.state.status = 'saving'
    this.emit()
    try {
      await this.api.putCodes(utterance.utterance_id, this.state.coder, attempted)
    } catch (err) {
      // Revert the optimistic draft; the banner offers a retry.
      this.state.draft = this.serverFlags()
      this.state.status = 'error'
      this.state.lastError = err instanceof Error ? err.message : String(err)
      this.emit()
      return false
    }
    const firstTime = !utterance.coded_by.includes(this.state.coder)
    utterance.codes[this.state.coder] = clone(attempted)
    if (firstTime) {
      utterance.coded_by = [...utterance.coded_by, this.state.coder].sort()
      this.state.codedByMe += 1
    }
    this.state.draft = attempted
    this.state.status = 'idle'
    this.state.lastError = null
    this.emit()
    return true
  }
}
